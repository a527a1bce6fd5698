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
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mallows/distance.hpp"
#include "mallows/local_query.hpp"

namespace mallows {

// Variant k uses r = k components; variant 2k uses r = 2k.
enum class LowerBoundVariant { k, two_k };

inline LowerBoundVariant parse_variant(const std::string& s) {
  if (s == "k") return LowerBoundVariant::k;
  if (s == "2k") return LowerBoundVariant::two_k;
  throw std::invalid_argument("variant must be \"k\" or \"2k\"");
}

inline std::string variant_name(LowerBoundVariant v) { return v == LowerBoundVariant::k ? "k" : "2k"; }

struct CloseMixturePair {
  MallowsMixture M, Mp;
  int n = 0, k = 0, r = 0;
  double mu = 0.0, lambda = 0.0;
  LowerBoundVariant variant = LowerBoundVariant::k;
  std::vector<double> phis;          // phi_i = i * lambda, i = 1..r
  std::vector<double> coefficients;  // (-1)^{i-1} C(r-1, i-1) F(phi_i)
  std::vector<double> corrected;     // after the zero-sum correction
  int corrected_index = -1;          // -1 when no correction was needed
  double correction = 0.0;
  double claimed_tv_bound = 0.0;     // 4 (4 mu r)^{r-1}
  double claimed_l1_bound = 0.0;     // (2 n r lambda)^{r-1} / (1 - 2 n r lambda)
  double weight_floor = 0.0;         // 1 / (10 * 2^r)
};

// Entry of the uncorrected combination at a permutation with i inversions.
inline double close_combination_entry(double lambda, int r, int i) {
  double s = 0.0;
  for (int j = 0; j < r; ++j) {
    const double term = static_cast<double>(binomial(r - 1, j)) * std::pow(j + 1.0, i);
    s += (j % 2 == 0 ? term : -term);
  }
  return std::pow(lambda, i) * s;
}

inline CloseMixturePair build_close_mixtures(int k, double mu, int n, LowerBoundVariant variant) {
  if (n < 2) throw std::invalid_argument("n must be >= 2");
  if (!(mu >= 0.0)) throw std::invalid_argument("mu must be >= 0");
  const int r = variant == LowerBoundVariant::k ? k : 2 * k;
  if (r < 2) throw std::invalid_argument("the construction needs r >= 2 components");
  if (r > 30) throw std::invalid_argument("r too large");
  CloseMixturePair out;
  out.n = n;
  out.k = k;
  out.r = r;
  out.mu = mu;
  out.variant = variant;
  out.lambda = 2.0 * mu / n;
  const double x = 2.0 * n * r * out.lambda;
  if (x >= 1.0) throw std::invalid_argument("2 n r lambda must be below 1 (bound diverges)");
  out.claimed_l1_bound = std::pow(x, r - 1) / (1.0 - x);
  out.claimed_tv_bound = 4.0 * std::pow(4.0 * mu * r, r - 1);
  out.weight_floor = 1.0 / (10.0 * std::pow(2.0, r));

  double sum = 0.0;
  for (int i = 1; i <= r; ++i) {
    const double phi = i * out.lambda;
    out.phis.push_back(phi);
    const double a = static_cast<double>(binomial(r - 1, i - 1)) * normalizer(n, phi);
    out.coefficients.push_back(i % 2 == 1 ? a : -a);
    sum += out.coefficients.back();
  }
  out.corrected = out.coefficients;
  if (sum > 0.0) out.corrected_index = 1;
  if (sum < 0.0) out.corrected_index = 0;
  if (out.corrected_index >= 0) {
    out.correction = -sum;
    out.corrected[out.corrected_index] -= sum;
  }

  std::vector<MallowsModel> pos, neg;
  std::vector<double> wp, wn;
  double sp = 0.0, sn = 0.0;
  for (int i = 0; i < r; ++i) {
    const MallowsModel m(out.phis[i], Permutation::identity(n));
    if (out.corrected[i] > 0.0) {
      pos.push_back(m);
      wp.push_back(out.corrected[i]);
      sp += out.corrected[i];
    } else if (out.corrected[i] < 0.0) {
      neg.push_back(m);
      wn.push_back(-out.corrected[i]);
      sn -= out.corrected[i];
    }
  }
  for (double& w : wp) w /= sp;
  for (double& w : wn) w /= sn;
  out.M = MallowsMixture(pos, wp);
  out.Mp = MallowsMixture(neg, wn);
  return out;
}

struct CloseMixtureReport {
  double exact_tv = 0.0;
  double tv_bound = 0.0;
  bool tv_claim_holds = false;
  double l1_norm = 0.0;  // uncorrected combination, by enumeration
  double l1_bound = 0.0;
  bool l1_claim_holds = false;
  double max_low_entry = 0.0;  // max |v| over permutations with <= r-2 inversions
  bool low_entries_zero = false;
  double closed_form_gap = 0.0;  // max |enumerated - closed form| / max(1, |closed form|)
  double min_weight = 0.0;
  double weight_floor = 0.0;
  bool weights_hold = false;
  std::vector<std::vector<double>> component_tv_matrix;
  std::vector<double> tv_to_uniform;
  double min_component_tv = 0.0;
  bool asymptotic_regime = false;  // n > 100 r^2 and mu < 1/(100 r^2)
  bool ok = false;
};

// Exact checks by enumeration of S_n.
inline CloseMixtureReport verify_close_mixtures(const CloseMixturePair& pair, double zero_tol = 1e-13) {
  const int n = pair.n, r = pair.r;
  require_enumerable(n);
  CloseMixtureReport rep;
  rep.tv_bound = pair.claimed_tv_bound;
  rep.l1_bound = pair.claimed_l1_bound;
  rep.weight_floor = pair.weight_floor;
  rep.exact_tv = tv_exact(pair.M, pair.Mp).value;
  rep.tv_claim_holds = rep.exact_tv <= rep.tv_bound;

  std::vector<DistributionVector> vecs;
  for (double phi : pair.phis) vecs.push_back(vectorize(MallowsModel(phi, Permutation::identity(n))));
  std::size_t idx = 0;
  for_each_permutation(n, [&](const std::vector<int>& rk) {
    double v = 0.0;
    for (int i = 0; i < r; ++i) v += pair.coefficients[i] * vecs[i].values[idx];
    const int inv = inversions(rk);
    const double cf = close_combination_entry(pair.lambda, r, inv);
    rep.closed_form_gap = std::max(rep.closed_form_gap, std::abs(v - cf) / std::max(1.0, std::abs(cf)));
    rep.l1_norm += std::abs(v);
    if (inv <= r - 2) rep.max_low_entry = std::max(rep.max_low_entry, std::abs(v));
    ++idx;
  });
  rep.l1_claim_holds = rep.l1_norm <= rep.l1_bound;
  rep.low_entries_zero = rep.max_low_entry <= zero_tol;

  rep.min_weight = 1.0;
  for (const auto* mix : {&pair.M, &pair.Mp})
    for (double w : mix->weights) rep.min_weight = std::min(rep.min_weight, w);
  rep.weights_hold = rep.min_weight >= rep.weight_floor;

  const auto uniform = vectorize(MallowsModel(1.0, Permutation::identity(n)));
  rep.component_tv_matrix.assign(r, std::vector<double>(r, 0.0));
  rep.min_component_tv = 1.0;
  for (int i = 0; i < r; ++i) {
    rep.tv_to_uniform.push_back(tv_exact(vecs[i], uniform).value);
    for (int j = i + 1; j < r; ++j) {
      const double t = tv_exact(vecs[i], vecs[j]).value;
      rep.component_tv_matrix[i][j] = rep.component_tv_matrix[j][i] = t;
      rep.min_component_tv = std::min(rep.min_component_tv, t);
    }
  }
  rep.asymptotic_regime = n > 100 * r * r && pair.mu < 1.0 / (100.0 * r * r);
  rep.ok = rep.tv_claim_holds && rep.l1_claim_holds && rep.low_entries_zero && rep.weights_hold;
  return rep;
}

struct HardInstance {
  int ell = 0, n = 0, k = 0;
  double phi = 0.0;
  std::vector<unsigned> even_masks, odd_masks;  // bit b set: pairs of block b flipped
  std::vector<Permutation> even_centers, odd_centers;
  MallowsMixture M, Mp;
};

// Identity with every consecutive pair inside the blocks in mask swapped.
inline Permutation block_flip(int n, int ell, unsigned mask) {
  const int bs = n / ell;
  std::vector<int> r(n);
  for (int i = 0; i < n; ++i) r[i] = i + 1;
  for (int b = 0; b < ell; ++b)
    if (mask >> b & 1u)
      for (int j = b * bs; j + 1 < (b + 1) * bs; j += 2) std::swap(r[j], r[j + 1]);
  return Permutation(std::move(r));
}

inline HardInstance build_sql_hard_instance(int ell, int n) {
  if (ell < 1 || ell > 20) throw std::invalid_argument("ell must lie in [1, 20]");
  if (n < 2 || n % (2 * ell) != 0) throw std::invalid_argument("2 ell must divide n");
  HardInstance h;
  h.ell = ell;
  h.n = n;
  h.k = 1 << (ell - 1);
  h.phi = 1.0 - std::sqrt(static_cast<double>(h.k) / n);
  std::vector<MallowsModel> ev, od;
  for (unsigned mask = 0; mask < (1u << ell); ++mask) {
    const auto c = block_flip(n, ell, mask);
    if (std::popcount(mask) % 2 == 0) {
      h.even_masks.push_back(mask);
      h.even_centers.push_back(c);
      ev.emplace_back(h.phi, c);
    } else {
      h.odd_masks.push_back(mask);
      h.odd_centers.push_back(c);
      od.emplace_back(h.phi, c);
    }
  }
  const std::vector<double> w(h.k, 1.0 / h.k);
  h.M = MallowsMixture(ev, w);
  h.Mp = MallowsMixture(od, w);
  return h;
}

struct SqlReport {
  std::size_t small_queries = 0;  // queries on 1..ell-1 elements
  bool indist_small_queries = false;
  std::int64_t max_histogram_gap = 0;
  double max_placement_prob = 0.0;  // over components and ell-element queries
  double max_mixture_placement_prob = 0.0;
  double placement_cap = 0.0;  // (2k/n)^{ell/2}
  bool placement_cap_holds = false;
  std::vector<std::vector<double>> component_tv_matrix;  // even centres first
  std::vector<double> tv_to_uniform;
  double min_component_tv = 0.0;
  double min_cross_tv = 0.0;  // between a component of M and one of M'
  double min_tv_to_uniform = 0.0;
  bool nondegenerate = false;  // strictly positive separation
  bool ok = false;
};

namespace detail {

inline std::vector<std::vector<int>> combinations(int n, int s) {
  std::vector<std::vector<int>> out;
  std::vector<int> c(s);
  for (int i = 0; i < s; ++i) c[i] = i;
  while (true) {
    out.push_back(c);
    int i = s - 1;
    while (i >= 0 && c[i] == n - s + i) --i;
    if (i < 0) break;
    ++c[i];
    for (int j = i + 1; j < s; ++j) c[j] = c[j - 1] + 1;
  }
  return out;
}

// Query key: subset index times n^s plus the positions of the subset's
// elements in base n.
template <class F>
void for_each_matched_query(const std::vector<std::vector<int>>& subsets, int n,
                            const std::vector<int>& pos0, F&& f) {
  for (std::size_t si = 0; si < subsets.size(); ++si) {
    std::uint64_t key = 0;
    for (int e : subsets[si]) key = key * n + static_cast<std::uint64_t>(pos0[e]);
    f(si, key);
  }
}

inline std::uint64_t int_pow(int b, int e) {
  std::uint64_t r = 1;
  for (int i = 0; i < e; ++i) r *= static_cast<std::uint64_t>(b);
  return r;
}

}  // namespace detail

// (a) Every query on fewer than ell elements: for each (query, distance d) the
// number of (component, permutation) pairs with that distance is compared
// between the two mixtures. Equal counts make the answers equal as
// polynomials in phi, so the check is exact.
// (b) Largest ell-element placement probability against (2k/n)^{ell/2}.
// (c) Component separations, reported; asserted only to be positive.
inline SqlReport verify_sql_instance(const HardInstance& h, std::size_t max_cells = 50'000'000) {
  const int n = h.n, ell = h.ell;
  require_enumerable(n);
  SqlReport rep;
  const int dmax = n * (n - 1) / 2;
  std::vector<Ranking> perms;
  for_each_permutation(n, [&](const std::vector<int>& r) { perms.push_back(r); });

  std::vector<const Permutation*> centers;
  std::vector<int> sign;
  for (const auto& c : h.even_centers) centers.push_back(&c), sign.push_back(1);
  for (const auto& c : h.odd_centers) centers.push_back(&c), sign.push_back(-1);

  // Distances of every permutation to every centre.
  std::vector<std::vector<std::uint8_t>> dist(centers.size(), std::vector<std::uint8_t>(perms.size()));
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const auto cpos = centers[c]->positions();
    for (std::size_t p = 0; p < perms.size(); ++p) {
      int d = 0;
      const auto& r = perms[p];
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          if (cpos[r[i] - 1] > cpos[r[j] - 1]) ++d;
      dist[c][p] = static_cast<std::uint8_t>(d);
    }
  }
  std::vector<std::vector<int>> pos0(perms.size(), std::vector<int>(n));
  for (std::size_t p = 0; p < perms.size(); ++p)
    for (int i = 0; i < n; ++i) pos0[p][perms[p][i] - 1] = i;

  rep.indist_small_queries = true;
  for (int s = 1; s < ell; ++s) {
    const auto subsets = detail::combinations(n, s);
    const std::uint64_t per = detail::int_pow(n, s);
    const std::uint64_t cells = subsets.size() * per * static_cast<std::uint64_t>(dmax + 1);
    if (cells > max_cells) throw resource_limit_error("sub-ell query table too large");
    std::vector<std::int64_t> diff(cells, 0);
    std::vector<char> seen(subsets.size() * per, 0);
    for (std::size_t p = 0; p < perms.size(); ++p)
      detail::for_each_matched_query(subsets, n, pos0[p], [&](std::size_t si, std::uint64_t key) {
        const std::uint64_t q = si * per + key;
        seen[q] = 1;
        for (std::size_t c = 0; c < centers.size(); ++c) diff[q * (dmax + 1) + dist[c][p]] += sign[c];
      });
    for (char x : seen) rep.small_queries += x;
    for (auto x : diff) rep.max_histogram_gap = std::max(rep.max_histogram_gap, std::abs(x));
  }
  rep.indist_small_queries = rep.max_histogram_gap == 0;

  // ell-element placements.
  {
    const auto subsets = detail::combinations(n, ell);
    const std::uint64_t per = detail::int_pow(n, ell);
    const std::uint64_t cells = subsets.size() * per;
    if (cells * centers.size() > max_cells) throw resource_limit_error("ell-element query table too large");
    std::vector<double> w(dmax + 1);
    const double z = normalizer(n, h.phi);
    for (int d = 0; d <= dmax; ++d) w[d] = std::pow(h.phi, d) / z;
    std::vector<double> mix_even(cells, 0.0), mix_odd(cells, 0.0);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      std::vector<double> comp(cells, 0.0);
      for (std::size_t p = 0; p < perms.size(); ++p)
        detail::for_each_matched_query(subsets, n, pos0[p], [&](std::size_t si, std::uint64_t key) {
          comp[si * per + key] += w[dist[c][p]];
        });
      auto& mix = sign[c] > 0 ? mix_even : mix_odd;
      for (std::uint64_t q = 0; q < cells; ++q) {
        rep.max_placement_prob = std::max(rep.max_placement_prob, comp[q]);
        mix[q] += comp[q] / h.k;
      }
    }
    for (std::uint64_t q = 0; q < cells; ++q)
      rep.max_mixture_placement_prob =
          std::max({rep.max_mixture_placement_prob, mix_even[q], mix_odd[q]});
  }
  rep.placement_cap = std::pow(2.0 * h.k / n, ell / 2.0);
  rep.placement_cap_holds = rep.max_placement_prob <= rep.placement_cap;

  std::vector<DistributionVector> vecs;
  for (const auto* c : centers) vecs.push_back(vectorize(MallowsModel(h.phi, *c)));
  const auto uniform = vectorize(MallowsModel(1.0, Permutation::identity(n)));
  const std::size_t m = centers.size();
  rep.component_tv_matrix.assign(m, std::vector<double>(m, 0.0));
  rep.min_component_tv = rep.min_cross_tv = rep.min_tv_to_uniform = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    rep.tv_to_uniform.push_back(tv_exact(vecs[i], uniform).value);
    rep.min_tv_to_uniform = std::min(rep.min_tv_to_uniform, rep.tv_to_uniform.back());
    for (std::size_t j = i + 1; j < m; ++j) {
      const double t = tv_exact(vecs[i], vecs[j]).value;
      rep.component_tv_matrix[i][j] = rep.component_tv_matrix[j][i] = t;
      rep.min_component_tv = std::min(rep.min_component_tv, t);
      if (sign[i] != sign[j]) rep.min_cross_tv = std::min(rep.min_cross_tv, t);
    }
  }
  rep.nondegenerate = rep.min_component_tv > 0.0 && rep.min_tv_to_uniform > 0.0;
  rep.ok = rep.indist_small_queries && rep.placement_cap_holds && rep.nondegenerate;
  return rep;
}

}  // namespace mallows
