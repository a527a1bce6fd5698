// Copyright 2026 The Mallows Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <charconv>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mallows/io.hpp"
#include "mallows/local_query.hpp"

namespace mallows {

// Shortest round-trip decimal, with ".0" appended to integral values.
inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEni") == std::string::npos) s += ".0";
  return s;
}

// Line protocol:
//   Q <tau> <e1>:<p1> <e2>:<p2> ...  ->  A <value> <cost_total>
//   BYE                              ->  connection closed
//   anything malformed               ->  E <message>
// One ledger per service; requests are serialised on it.
class OracleService {
 public:
  enum class Backing { exact, sampled };

  OracleService(MallowsMixture mix, Backing backing = Backing::exact, std::size_t samples = 0,
                std::uint64_t seed = 0, NoiseMode noise = NoiseMode::exact)
      : n_(mix.n()), backing_(backing), noise_(noise), rng_(derive_seed(seed, "oracle-noise", 0)) {
    if (noise == NoiseMode::adversarial_collapse)
      throw std::invalid_argument("oracle-serve supports exact and uniform noise only");
    if (backing == Backing::exact) {
      engine_.emplace(std::move(mix));
    } else {
      if (samples == 0) throw std::invalid_argument("sampled backing needs samples > 0");
      sampled_.emplace(PlacementOracle::empirical(sample_mixture(mix, samples, seed).perms, 0.05));
    }
  }

  int n() const { return n_; }

  std::string handle_line(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    std::istringstream in(line);
    std::string cmd;
    if (!(in >> cmd)) return "E empty request";
    if (cmd != "Q") return "E unknown command";
    std::string tok;
    if (!(in >> tok)) return "E missing tolerance";
    double tau = 0.0;
    {
      const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), tau);
      if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) return "E malformed tolerance";
    }
    if (!(tau > 0.0)) return "E tolerance must be positive";
    PlacementQuery q;
    while (in >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) return "E malformed assignment " + tok;
      int e = 0, p = 0;
      const char* b = tok.data();
      const char* m = b + colon;
      const char* end = b + tok.size();
      const auto r1 = std::from_chars(b, m, e);
      const auto r2 = std::from_chars(m + 1, end, p);
      if (r1.ec != std::errc() || r1.ptr != m || r2.ec != std::errc() || r2.ptr != end)
        return "E malformed assignment " + tok;
      q.assignments.emplace_back(e, p);
    }
    try {
      q.validate(n_);
    } catch (const std::invalid_argument& ex) {
      return std::string("E ") + ex.what();
    }
    std::lock_guard lock(mu_);
    double value = engine_ ? engine_->exact(q) : sampled_->query(q).value;
    if (noise_ == NoiseMode::uniform) {
      std::uniform_real_distribution<double> u(-tau, tau);
      value = std::clamp(value + u(rng_), 0.0, 1.0);
    }
    ledger_.record(q, tau, value);
    return "A " + format_number(value) + " " + format_number(ledger_.total_cost());
  }

  json ledger_json() const {
    std::lock_guard lock(mu_);
    json entries = json::array();
    for (const auto& e : ledger_.entries()) {
      json a = json::array();
      for (auto [el, p] : e.query.assignments) a.push_back({el, p});
      entries.push_back({{"assignments", a}, {"tau", e.tau}, {"answer", e.answer}, {"cost", e.cost}});
    }
    return {{"queries", entries}, {"count", ledger_.size()}, {"total_cost", ledger_.total_cost()},
            {"total_cost_exact", ledger_.total_cost_string()}};
  }

  std::size_t query_count() const {
    std::lock_guard lock(mu_);
    return ledger_.size();
  }

 private:
  int n_;
  Backing backing_;
  NoiseMode noise_;
  std::optional<MixtureQueryEngine> engine_;
  std::optional<PlacementOracle> sampled_;
  mutable std::mutex mu_;
  Rng rng_;
  QueryLedger ledger_;
};

namespace detail {

inline bool send_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const ssize_t w = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
    if (w <= 0) return false;
    off += static_cast<std::size_t>(w);
  }
  return true;
}

inline void serve_connection(OracleService& svc, int fd, const std::atomic<bool>& stop) {
  constexpr std::size_t kMaxLine = 1 << 16;
  std::string buf;
  char chunk[4096];
  bool open = true;
  while (open && !stop.load()) {
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (r < 0) break;
    if (r == 0) continue;
    const ssize_t got = ::recv(fd, chunk, sizeof chunk, 0);
    if (got <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(got));
    std::size_t nl;
    while (open && (nl = buf.find('\n')) != std::string::npos) {
      std::string line = buf.substr(0, nl);
      buf.erase(0, nl + 1);
      if (line == "BYE" || line == "BYE\r") {
        open = false;
        break;
      }
      open = send_all(fd, svc.handle_line(line) + "\n");
    }
    if (buf.size() > kMaxLine) {
      buf.clear();
      open = send_all(fd, "E line too long\n");
    }
  }
  ::close(fd);
}

}  // namespace detail

// Listens on 127.0.0.1:port (0 picks a free port) until stop is set. Each
// connection gets its own thread; on_listen receives the bound port.
inline void serve(OracleService& svc, int port, const std::atomic<bool>& stop,
                  const std::function<void(int)>& on_listen = {}) {
  const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (lfd < 0) throw std::runtime_error("socket() failed");
  const int one = 1;
  ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(lfd, 16) < 0) {
    ::close(lfd);
    throw std::runtime_error("cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listen) on_listen(ntohs(addr.sin_port));
  std::vector<std::thread> conns;
  while (!stop.load()) {
    pollfd p{lfd, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (r <= 0) continue;
    const int fd = ::accept(lfd, nullptr, nullptr);
    if (fd < 0) continue;
    conns.emplace_back([&svc, fd, &stop] { detail::serve_connection(svc, fd, stop); });
  }
  ::close(lfd);
  for (auto& t : conns) t.join();
}

}  // namespace mallows
