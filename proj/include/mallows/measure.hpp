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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mallows/mallows.hpp"

namespace mallows {

// A finite signed measure on S_n stored as weighted atoms. Exact
// distributions, empirical sample pools and residuals such as
// v - w * v(M) all live here; every moment, tensor entry and placement
// probability is an expectation against it.
class PermMeasure {
 public:
  explicit PermMeasure(int n = 0) : n_(n) {}

  static PermMeasure exact(const MallowsMixture& mix) {
    const int n = mix.n();
    require_enumerable(n);
    PermMeasure m(n);
    std::vector<std::vector<double>> dw;
    std::vector<std::vector<int>> cpos;
    for (const auto& c : mix.components) {
      dw.push_back(detail::distance_weights(n, c.phi));
      cpos.push_back(c.center.positions());
    }
    m.reserve(factorial(n));
    for_each_permutation(n, [&](const std::vector<int>& r) {
      double w = 0.0;
      for (int c = 0; c < mix.k(); ++c) {
        int d = 0;
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j)
            if (cpos[c][r[i] - 1] > cpos[c][r[j] - 1]) ++d;
        w += mix.weights[c] * dw[c][d];
      }
      m.push(r.data(), w);
    });
    return m;
  }

  static PermMeasure exact(const MallowsModel& model) {
    return exact(MallowsMixture(model));
  }

  // Each distinct sample becomes one atom with weight count / m.
  static PermMeasure empirical(const std::vector<Permutation>& samples) {
    if (samples.empty()) return PermMeasure(0);
    PermMeasure m(samples.front().n());
    const double unit = 1.0 / static_cast<double>(samples.size());
    for (const auto& s : samples) m.add(s.ranking().data(), unit);
    return m;
  }

  int n() const { return n_; }
  std::size_t size() const { return w_.size(); }
  const std::uint8_t* ranking(std::size_t i) const { return &rank_[i * n_]; }
  const std::uint8_t* positions(std::size_t i) const { return &pos_[i * n_]; }
  double weight(std::size_t i) const { return w_[i]; }

  Permutation permutation(std::size_t i) const {
    std::vector<int> r(ranking(i), ranking(i) + n_);
    return Permutation(std::move(r));
  }

  double mass() const {
    double s = 0.0;
    for (double w : w_) s += w;
    return s;
  }

  void reserve(std::size_t atoms) {
    rank_.reserve(atoms * n_);
    pos_.reserve(atoms * n_);
    w_.reserve(atoms);
  }

  // Adds weight to an atom, merging with an existing equal atom.
  template <class Int>
  void add(const Int* r, double w) {
    const std::uint64_t key = lex_rank(r, n_);
    auto it = index_.find(key);
    if (it != index_.end()) {
      w_[it->second] += w;
      return;
    }
    push(r, w);
  }
  void add(const Permutation& p, double w) { add(p.ranking().data(), w); }

  // this += c * other
  void add_scaled(const PermMeasure& other, double c) {
    for (std::size_t i = 0; i < other.size(); ++i) add(other.ranking(i), c * other.weight(i));
  }

  // sum_i w_i f(ranking_i, positions_i)
  template <class F>
  double expectation(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i)
      if (w_[i] != 0.0) s += w_[i] * f(ranking(i), positions(i));
    return s;
  }

  double l1_norm() const {
    double s = 0.0;
    for (double w : w_) s += std::abs(w);
    return s;
  }

  // Mass function on lexicographic ranks (n <= cutoff).
  DistributionVector to_vector() const {
    require_enumerable(n_);
    DistributionVector v{n_, std::vector<double>(factorial(n_), 0.0)};
    for (std::size_t i = 0; i < size(); ++i) v.values[lex_rank(ranking(i), n_)] += w_[i];
    return v;
  }

 private:
  template <class Int>
  void push(const Int* r, double w) {
    const std::size_t idx = w_.size();
    index_.emplace(lex_rank(r, n_), idx);
    const std::size_t base = rank_.size();
    rank_.resize(base + n_);
    pos_.resize(base + n_);
    for (int i = 0; i < n_; ++i) {
      rank_[base + i] = static_cast<std::uint8_t>(r[i]);
      pos_[base + r[i] - 1] = static_cast<std::uint8_t>(i);
    }
    w_.push_back(w);
  }

  int n_;
  std::vector<std::uint8_t> rank_;
  std::vector<std::uint8_t> pos_;
  std::vector<double> w_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

// Element/position assignments, both 1-based.
struct PlacementQuery {
  std::vector<std::pair<int, int>> assignments;

  void validate(int n) const {
    if (assignments.empty() || static_cast<int>(assignments.size()) > n)
      throw std::invalid_argument("query must assign between 1 and n elements");
    std::vector<char> se(n + 1, 0), sp(n + 1, 0);
    for (auto [e, p] : assignments) {
      if (e < 1 || e > n) throw std::invalid_argument("element out of range");
      if (p < 1 || p > n) throw std::invalid_argument("position out of range");
      if (se[e]) throw std::invalid_argument("duplicate element");
      if (sp[p]) throw std::invalid_argument("duplicate position");
      se[e] = sp[p] = 1;
    }
  }

  bool matches(const std::uint8_t* pos) const {
    for (auto [e, p] : assignments)
      if (pos[e - 1] != p - 1) return false;
    return true;
  }

  friend bool operator<(const PlacementQuery& a, const PlacementQuery& b) {
    return a.assignments < b.assignments;
  }
  friend bool operator==(const PlacementQuery& a, const PlacementQuery& b) = default;
};

struct PlacementAnswer {
  double value;
  double tolerance;  // 0 for exact backing
};

// Hoeffding: m >= log(2/delta) / (2 tau^2).
inline std::size_t hoeffding_samples(double tau, double delta) {
  return static_cast<std::size_t>(std::ceil(std::log(2.0 / delta) / (2.0 * tau * tau)));
}

inline double hoeffding_tolerance(std::size_t m, double delta) {
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(m)));
}

class PlacementOracle {
 public:
  enum class Backing { exact, empirical };

  static PlacementOracle exact(const MallowsMixture& mix) {
    return PlacementOracle(Backing::exact, PermMeasure::exact(mix), 0.0, 0.0, 0);
  }
  static PlacementOracle empirical(const std::vector<Permutation>& samples, double delta) {
    const double tau = hoeffding_tolerance(samples.size(), delta);
    return PlacementOracle(Backing::empirical, PermMeasure::empirical(samples), tau, delta,
                           samples.size());
  }

  Backing backing() const { return backing_; }
  int n() const { return measure_.n(); }
  double tolerance() const { return tau_; }
  double delta() const { return delta_; }
  std::size_t sample_count() const { return m_; }
  const PermMeasure& measure() const { return measure_; }

  PlacementAnswer query(const PlacementQuery& q) const {
    q.validate(n());
    const double v = measure_.expectation(
        [&](const std::uint8_t*, const std::uint8_t* pos) { return q.matches(pos) ? 1.0 : 0.0; });
    return {v, tau_};
  }

 private:
  PlacementOracle(Backing b, PermMeasure m, double tau, double delta, std::size_t count)
      : backing_(b), measure_(std::move(m)), tau_(tau), delta_(delta), m_(count) {}

  Backing backing_;
  PermMeasure measure_;
  double tau_;
  double delta_;
  std::size_t m_;
};

inline PlacementAnswer placement_prob(const PlacementOracle& oracle, const PlacementQuery& q) {
  return oracle.query(q);
}

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
  return r;
}

inline std::uint64_t moment_entry_count(int n, int c) {
  std::uint64_t falling = 1;
  for (int i = 0; i < c; ++i) falling *= static_cast<std::uint64_t>(n - i);
  return binomial(n, c) * falling;
}

using MomentVector = std::map<PlacementQuery, double>;

// Order-c moments of a measure: one entry per (c-subset, injective placement),
// zeros included. Keys list assignments by increasing element.
inline MomentVector moment_vector(const PermMeasure& m, int c,
                                  std::uint64_t max_entries = 5'000'000) {
  const int n = m.n();
  if (c < 1 || c > n) throw std::invalid_argument("moment order must satisfy 1 <= c <= n");
  if (moment_entry_count(n, c) > max_entries)
    throw resource_limit_error("moment vector exceeds the memory budget");
  std::vector<std::vector<int>> subsets;
  std::vector<int> mask(n, 0);
  std::fill(mask.begin(), mask.begin() + c, 1);
  do {
    std::vector<int> s;
    for (int i = 0; i < n; ++i)
      if (mask[i]) s.push_back(i + 1);
    subsets.push_back(std::move(s));
  } while (std::prev_permutation(mask.begin(), mask.end()));

  MomentVector out;
  for (const auto& s : subsets) {
    std::vector<int> slots(n);
    std::iota(slots.begin(), slots.end(), 1);
    // every injective placement of s: choose ordered positions
    std::vector<int> pick(n, 0);
    std::fill(pick.begin(), pick.begin() + c, 1);
    do {
      std::vector<int> chosen;
      for (int i = 0; i < n; ++i)
        if (pick[i]) chosen.push_back(i + 1);
      do {
        PlacementQuery q;
        for (int i = 0; i < c; ++i) q.assignments.emplace_back(s[i], chosen[i]);
        out.emplace(std::move(q), 0.0);
      } while (std::next_permutation(chosen.begin(), chosen.end()));
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  for (std::size_t a = 0; a < m.size(); ++a) {
    const auto* pos = m.positions(a);
    for (const auto& s : subsets) {
      PlacementQuery q;
      for (int e : s) q.assignments.emplace_back(e, pos[e - 1] + 1);
      out[q] += m.weight(a);
    }
  }
  return out;
}

inline MomentVector moment_vector(const MallowsMixture& mix, int c,
                                  std::uint64_t max_entries = 5'000'000) {
  if (moment_entry_count(mix.n(), c) > max_entries)
    throw resource_limit_error("moment vector exceeds the memory budget");
  return moment_vector(PermMeasure::exact(mix), c, max_entries);
}

}  // namespace mallows
