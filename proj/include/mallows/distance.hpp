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

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mallows/measure.hpp"

namespace mallows {

struct TVReport {
  double value = 0.0;
  std::string mode;  // "exact" | "empirical"
  double tolerance = 0.0;
};

namespace detail {
inline void check_distribution(const DistributionVector& p) {
  for (double x : p.values)
    if (x < -1e-15) throw std::invalid_argument("distribution has a negative entry");
  if (std::abs(p.sum() - 1.0) > 1e-9) throw std::invalid_argument("distribution does not sum to 1");
}
}  // namespace detail

inline TVReport tv_exact(const DistributionVector& p, const DistributionVector& q) {
  if (p.values.size() != q.values.size()) throw std::invalid_argument("tv_exact: dimension mismatch");
  detail::check_distribution(p);
  detail::check_distribution(q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) s += std::abs(p.values[i] - q.values[i]);
  return {0.5 * s, "exact", 0.0};
}

inline TVReport tv_exact(const MallowsMixture& a, const MallowsMixture& b) {
  return tv_exact(vectorize(a), vectorize(b));
}

inline TVReport tv_exact(const MallowsModel& a, const MallowsModel& b) {
  return tv_exact(vectorize(a), vectorize(b));
}

// Plug-in estimate over the observed support. Tolerance: each side's expected
// L1 error is at most sqrt(K / m) with K the support size bound, so the TV
// estimate is within (sqrt(K/ma) + sqrt(K/mb)) / 2 in expectation.
inline TVReport tv_empirical(const std::vector<Permutation>& a, const std::vector<Permutation>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("tv_empirical: empty sample");
  if (a.front().n() != b.front().n()) throw std::invalid_argument("tv_empirical: n mismatch");
  std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& p : a) ++counts[lex_rank(p)].first;
  for (const auto& p : b) ++counts[lex_rank(p)].second;
  const double ma = static_cast<double>(a.size()), mb = static_cast<double>(b.size());
  double s = 0.0;
  for (const auto& [key, c] : counts) s += std::abs(c.first / ma - c.second / mb);
  const double support = std::min<double>(static_cast<double>(factorial(a.front().n())),
                                          static_cast<double>(counts.size()));
  const double tol = 0.5 * (std::sqrt(support / ma) + std::sqrt(support / mb));
  return {std::min(1.0, 0.5 * s), "empirical", tol};
}

template <class SamplerA, class SamplerB>
TVReport tv_empirical(SamplerA&& sa, SamplerB&& sb, std::size_t m) {
  std::vector<Permutation> a, b;
  a.reserve(m);
  b.reserve(m);
  for (std::size_t i = 0; i < m; ++i) a.push_back(sa());
  for (std::size_t i = 0; i < m; ++i) b.push_back(sb());
  return tv_empirical(a, b);
}

struct BoundReport {
  double value = 0.0;  // measured quantity
  double bound = 0.0;
  bool holds = false;
};

inline BoundReport check_distinct_centers_bound(const MallowsModel& m1, const MallowsModel& m2,
                                                double eps) {
  if (m1.center == m2.center) throw precondition_violation("centers must differ");
  if (m1.phi > 1.0 - eps || m2.phi > 1.0 - eps)
    throw precondition_violation("phi must be at most 1 - eps");
  const double tv = tv_exact(m1, m2).value;
  return {tv, eps / 2.0, tv >= eps / 2.0};
}

inline double same_center_gap(int n, double mu) { return mu * mu / (10.0 * n * n * n); }

inline BoundReport check_same_center_bound(const MallowsModel& m1, const MallowsModel& m2,
                                           double mu) {
  if (!(m1.center == m2.center)) throw precondition_violation("centers must agree");
  const int n = m1.n();
  if (n < 2) throw precondition_violation("n must be at least 2");
  if (std::abs(m1.phi - m2.phi) > same_center_gap(n, mu))
    throw precondition_violation("phi gap exceeds mu^2/(10 n^3)");
  const double tv = tv_exact(m1, m2).value;
  return {tv, mu, tv <= mu};
}

struct RatioRange {
  double min = 1.0;
  double max = 1.0;
};

// Pointwise pmf ratio M1/M2 over S_n.
inline RatioRange pmf_ratio_range(const MallowsModel& m1, const MallowsModel& m2) {
  const auto a = vectorize(m1), b = vectorize(m2);
  RatioRange r{1e300, -1e300};
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (b.values[i] == 0.0) continue;
    const double q = a.values[i] / b.values[i];
    r.min = std::min(r.min, q);
    r.max = std::max(r.max, q);
  }
  return r;
}

inline double l1_combination(const std::vector<MallowsModel>& models,
                             const std::vector<double>& coeffs) {
  if (models.size() != coeffs.size()) throw std::invalid_argument("l1_combination: size mismatch");
  if (models.empty()) return 0.0;
  std::vector<double> acc(factorial(models.front().n()), 0.0);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto v = vectorize(models[i]);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += coeffs[i] * v.values[j];
  }
  double s = 0.0;
  for (double x : acc) s += std::abs(x);
  return s;
}

}  // namespace mallows
