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

#include <gmp.h>
#include <gsl/gsl_version.h>

#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mallows/io.hpp"

namespace mallows {

inline constexpr const char* kLabVersion = "0.1.0";

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

inline json version_info() {
  return {{"mallows_lab", kLabVersion}, {"gsl", GSL_VERSION}, {"gmp", gmp_version},
          {"compiler", __VERSION__}, {"cxx", static_cast<long>(__cplusplus)}};
}

// One asserted bound. relation is "<=", ">=", "==" or "true".
struct CheckOutcome {
  std::string name;
  std::string check;  // stable tag naming the bound being checked
  std::string relation;
  double measured = 0.0;
  double bound = 0.0;
  bool holds = false;
};

inline json to_json(const CheckOutcome& c) {
  return {{"name", c.name}, {"check", c.check}, {"relation", c.relation},
          {"measured", c.measured}, {"bound", c.bound}, {"holds", c.holds}};
}

// One self-contained JSON object per run. Everything except the "runtime"
// member is a function of the configuration and seed.
class ExperimentRecord {
 public:
  ExperimentRecord(std::string subcommand, json config, std::optional<std::uint64_t> seed)
      : subcommand_(std::move(subcommand)), config_(std::move(config)), seed_(seed),
        started_(utc_timestamp()), t0_(std::chrono::steady_clock::now()) {}

  json& results() { return results_; }
  const json& results() const { return results_; }

  bool expect(const std::string& name, const std::string& check, double measured, const std::string& rel,
              double bound) {
    bool ok = false;
    if (rel == "<=") ok = measured <= bound;
    else if (rel == ">=") ok = measured >= bound;
    else if (rel == "==") ok = measured == bound;
    else throw std::invalid_argument("unknown relation " + rel);
    checks_.push_back({name, check, rel, measured, bound, ok});
    return ok;
  }

  bool expect_true(const std::string& name, const std::string& check, bool value) {
    checks_.push_back({name, check, "true", value ? 1.0 : 0.0, 1.0, value});
    return value;
  }

  void set_error(const std::string& kind, const std::string& what) {
    error_ = json{{"kind", kind}, {"message", what}};
  }

  void set_workers(int w) { workers_ = w; }

  bool passed() const {
    if (!error_.is_null()) return false;
    for (const auto& c : checks_)
      if (!c.holds) return false;
    return true;
  }

  const std::vector<CheckOutcome>& checks() const { return checks_; }

  json to_json() const {
    json checks = json::array();
    for (const auto& c : checks_) checks.push_back(mallows::to_json(c));
    json j{{"subcommand", subcommand_}, {"config", config_}, {"results", results_}, {"checks", checks},
           {"status", passed() ? "pass" : "fail"}, {"versions", version_info()}};
    j["seed"] = seed_ ? json(*seed_) : json(nullptr);
    if (!error_.is_null()) j["error"] = error_;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    j["runtime"] = {{"started_at", started_}, {"finished_at", utc_timestamp()},
                    {"elapsed_s", elapsed}, {"workers", workers_}};
    return j;
  }

 private:
  std::string subcommand_;
  json config_;
  std::optional<std::uint64_t> seed_;
  json results_ = json::object();
  std::vector<CheckOutcome> checks_;
  json error_;
  std::string started_;
  std::chrono::steady_clock::time_point t0_;
  int workers_ = 1;
};

// The record with run-dependent members removed; equal across re-runs.
inline json deterministic_view(json record) {
  record.erase("runtime");
  return record;
}

// Appends records to a file, or writes them to stdout ("-") or stderr ("stderr").
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path) : path_(path) {
    if (path_ != "-" && path_ != "stderr") {
      file_.open(path_, std::ios::app);
      if (!file_) throw std::invalid_argument("cannot open record file " + path_);
    }
  }
  void write(const json& j) {
    const std::string line = j.dump() + "\n";
    std::ostream& out = path_ == "-" ? std::cout : path_ == "stderr" ? std::cerr : file_;
    out << line;
    out.flush();
  }

 private:
  std::string path_;
  std::ofstream file_;
};

// Trial t of a run with master seed s uses derive_seed(s, tag, t); results are
// written to slot t, so the output does not depend on the worker count.
template <class F>
auto run_trials(std::size_t trials, int workers, std::uint64_t master, const std::string& tag, F&& body) {
  using R = decltype(body(std::size_t{0}, std::uint64_t{0}));
  std::vector<R> out(trials);
  std::vector<std::exception_ptr> errors(trials);
  parallel_for(trials, workers, [&](std::size_t t) {
    try {
      out[t] = body(t, derive_seed(master, tag, t));
    } catch (...) {
      errors[t] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace mallows
