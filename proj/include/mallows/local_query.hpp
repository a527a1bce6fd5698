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

#include <gmpxx.h>

#include <charconv>
#include <memory>
#include <optional>
#include <string>

#include "mallows/measure.hpp"

namespace mallows {

struct LocalQuery {
  PlacementQuery query;
  double tau = 0.1;
};

// Exact decimal value of the shortest round-trip representation of x.
inline mpq_class decimal_rational(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, res.ptr);
  int exp10 = 0;
  if (const auto e = s.find_first_of("eE"); e != std::string::npos) {
    exp10 = std::stoi(s.substr(e + 1));
    s.resize(e);
  }
  bool neg = false;
  if (!s.empty() && s[0] == '-') {
    neg = true;
    s.erase(0, 1);
  }
  if (const auto dot = s.find('.'); dot != std::string::npos) {
    exp10 -= static_cast<int>(s.size() - dot - 1);
    s.erase(dot, 1);
  }
  mpz_class num(s, 10);
  mpz_class scale;
  mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(std::abs(exp10)));
  mpq_class q = exp10 >= 0 ? mpq_class(num * scale) : mpq_class(num, scale);
  q.canonicalize();
  return neg ? mpq_class(-q) : q;
}

struct LedgerEntry {
  PlacementQuery query;
  double tau;
  double answer;
  double cost;
};

// Cost of a query is 1/tau^2; the total is kept exactly, with tau read as the
// decimal it prints as.
class QueryLedger {
 public:
  void record(const PlacementQuery& q, double tau, double answer) {
    const mpq_class t = decimal_rational(tau);
    const mpq_class c = 1 / (t * t);
    total_ += c;
    entries_.push_back({q, tau, answer, c.get_d()});
  }
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const mpq_class& total_cost_exact() const { return total_; }
  double total_cost() const { return total_.get_d(); }
  std::string total_cost_string() const { return total_.get_str(); }

 private:
  std::vector<LedgerEntry> entries_;
  mpq_class total_ = 0;
};

// Placement probability under a mixture: closed form when the query fixes a
// prefix (positions 1..t), enumeration otherwise.
class MixtureQueryEngine {
 public:
  explicit MixtureQueryEngine(MallowsMixture mix) : mix_(std::move(mix)) {}

  int n() const { return mix_.n(); }
  const MallowsMixture& mixture() const { return mix_; }

  double exact(const PlacementQuery& q) const {
    q.validate(mix_.n());
    auto a = q.assignments;
    std::sort(a.begin(), a.end(), [](auto x, auto y) { return x.second < y.second; });
    bool prefix = true;
    for (std::size_t i = 0; i < a.size(); ++i) prefix = prefix && a[i].second == static_cast<int>(i) + 1;
    if (prefix) {
      std::vector<int> seq;
      for (auto [e, p] : a) seq.push_back(e);
      double s = 0.0;
      for (int i = 0; i < mix_.k(); ++i)
        s += mix_.weights[i] * prefix_prob(mix_.components[i].phi, mix_.components[i].center, seq);
      return s;
    }
    if (!measure_) measure_ = std::make_shared<PermMeasure>(PermMeasure::exact(mix_));
    return measure_->expectation(
        [&](const std::uint8_t*, const std::uint8_t* pos) { return q.matches(pos) ? 1.0 : 0.0; });
  }

 private:
  MallowsMixture mix_;
  mutable std::shared_ptr<PermMeasure> measure_;
};

enum class NoiseMode { exact, uniform, adversarial_collapse };

inline NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "exact") return NoiseMode::exact;
  if (s == "uniform") return NoiseMode::uniform;
  if (s == "adversarial-collapse" || s == "adversarial") return NoiseMode::adversarial_collapse;
  throw std::invalid_argument("unknown noise mode: " + s);
}

// Answers local queries within +-tau and charges the ledger.
//   exact: the true value.
//   uniform: true value plus seeded U[-tau, tau], clipped to [0, 1].
//   adversarial-collapse: when the partner mixture's answer lies within 2 tau,
//     both are answered with the midpoint, so the two cannot be told apart.
class LocalQueryOracle {
 public:
  LocalQueryOracle(MallowsMixture mix, NoiseMode mode = NoiseMode::exact, std::uint64_t seed = 0,
                   std::optional<MallowsMixture> partner = std::nullopt)
      : engine_(std::move(mix)), mode_(mode), rng_(seed) {
    if (partner) partner_.emplace(std::move(*partner));
    if (mode_ == NoiseMode::adversarial_collapse && !partner_)
      throw std::invalid_argument("adversarial-collapse needs a partner mixture");
  }

  double query(const LocalQuery& lq) {
    if (!(lq.tau > 0.0)) throw std::invalid_argument("tolerance must be positive");
    const double truth = engine_.exact(lq.query);
    double ans = truth;
    if (mode_ == NoiseMode::uniform) {
      std::uniform_real_distribution<double> u(-lq.tau, lq.tau);
      ans = std::clamp(truth + u(rng_), 0.0, 1.0);
    } else if (mode_ == NoiseMode::adversarial_collapse) {
      const double other = partner_->exact(lq.query);
      if (std::abs(truth - other) <= 2.0 * lq.tau) ans = 0.5 * (truth + other);
    }
    ledger_.record(lq.query, lq.tau, ans);
    return ans;
  }

  int n() const { return engine_.n(); }
  const QueryLedger& ledger() const { return ledger_; }
  NoiseMode mode() const { return mode_; }

 private:
  MixtureQueryEngine engine_;
  std::optional<MixtureQueryEngine> partner_;
  NoiseMode mode_;
  Rng rng_;
  QueryLedger ledger_;
};

inline double local_query(LocalQueryOracle& oracle, const LocalQuery& q) { return oracle.query(q); }

}  // namespace mallows
