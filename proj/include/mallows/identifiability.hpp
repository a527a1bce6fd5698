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

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mallows/distance.hpp"
#include "mallows/linprog.hpp"
#include "mallows/structures.hpp"

namespace mallows {

// ---------------------------------------------------------------------------
// Zagier determinant

inline mpq_class parse_rational(const std::string& s) {
  mpq_class q;
  if (q.set_str(s, 10) != 0) throw std::invalid_argument("not a rational: " + s);
  q.canonicalize();
  return q;
}

inline mpq_class pow_q(const mpq_class& x, unsigned long e) {
  mpz_class num, den;
  mpz_pow_ui(num.get_mpz_t(), x.get_num_mpz_t(), e);
  mpz_pow_ui(den.get_mpz_t(), x.get_den_mpz_t(), e);
  mpq_class r(num, den);
  r.canonicalize();
  return r;
}

// Fraction-free (Bareiss) determinant; the matrix is consumed.
inline mpz_class bareiss_determinant(std::vector<std::vector<mpz_class>> a) {
  const std::size_t n = a.size();
  if (n == 0) return 1;
  mpz_class prev = 1;
  int sign = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (a[k][k] == 0) {
      std::size_t p = k + 1;
      while (p < n && a[p][k] == 0) ++p;
      if (p == n) return 0;
      std::swap(a[k], a[p]);
      sign = -sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      for (std::size_t j = k + 1; j < n; ++j) {
        a[i][j] = a[i][j] * a[k][k] - a[i][k] * a[k][j];
        mpz_divexact(a[i][j].get_mpz_t(), a[i][j].get_mpz_t(), prev.get_mpz_t());
      }
    }
    prev = a[k][k];
  }
  return sign * a[n - 1][n - 1];
}

struct ZagierReport {
  int n = 0;
  mpq_class phi;
  mpq_class det;
  mpq_class formula;
  bool equal = false;
};

inline mpq_class zagier_formula(int n, const mpq_class& phi) {
  mpq_class out = 1;
  const auto nf = factorial(n);
  for (int i = 1; i < n; ++i) {
    const unsigned long s = static_cast<unsigned long>(i) * i + i;
    const std::uint64_t num = nf * static_cast<std::uint64_t>(n - i);
    if (num % s != 0) throw std::logic_error("non-integer exponent in the product formula");
    out *= pow_q(1 - pow_q(phi, s), static_cast<unsigned long>(num / s));
  }
  return out;
}

inline ZagierReport zagier_check(int n, const mpq_class& phi) {
  if (n < 1 || n > 5) throw resource_limit_error("zagier_check supports 1 <= n <= 5");
  if (phi < 0 || phi >= 1) throw std::invalid_argument("phi must lie in [0,1)");
  const auto perms = enumerate_sn(n);
  const std::size_t size = perms.size();
  const unsigned long dmax = static_cast<unsigned long>(n * (n - 1) / 2);
  const mpz_class p = phi.get_num(), q = phi.get_den();
  std::vector<mpz_class> pp(dmax + 1), qq(dmax + 1);
  for (unsigned long d = 0; d <= dmax; ++d) {
    mpz_pow_ui(pp[d].get_mpz_t(), p.get_mpz_t(), d);
    mpz_pow_ui(qq[d].get_mpz_t(), q.get_mpz_t(), d);
  }
  // row scaled by q^dmax: entry p^I q^(dmax - I)
  std::vector<std::vector<mpz_class>> a(size, std::vector<mpz_class>(size));
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const int d = kendall_tau(perms[i], perms[j]);
      a[i][j] = pp[d] * qq[dmax - d];
    }
  const mpz_class det_int = bareiss_determinant(std::move(a));
  mpz_class scale;
  mpz_pow_ui(scale.get_mpz_t(), q.get_mpz_t(), dmax * size);
  ZagierReport r;
  r.n = n;
  r.phi = phi;
  r.det = mpq_class(det_int, scale);
  r.det.canonicalize();
  r.formula = zagier_formula(n, phi);
  r.equal = (r.det == r.formula);
  return r;
}

// ---------------------------------------------------------------------------
// Kruskal-rank checks on the columns of A_n(phi) / B_n(phi)

// Column indexed by sigma: entries over pi in lexicographic order; A-column is
// phi^{d(pi, sigma)}, B-column is the same divided by Z_n(phi).
inline std::vector<double> kernel_column(int n, double phi, const Permutation& sigma,
                                         bool normalized) {
  if (normalized) return vectorize(MallowsModel(phi, sigma)).values;
  std::vector<double> col;
  const auto spos = sigma.positions();
  for_each_permutation(n, [&](const std::vector<int>& r) {
    int d = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (spos[r[i] - 1] > spos[r[j] - 1]) ++d;
    col.push_back(std::pow(phi, d));
  });
  return col;
}

namespace detail {
inline void check_distinct(const std::vector<Permutation>& perms, int n) {
  if (perms.empty()) throw std::invalid_argument("need at least one permutation");
  for (std::size_t i = 0; i < perms.size(); ++i) {
    if (perms[i].n() != n) throw std::invalid_argument("permutation size mismatch");
    for (std::size_t j = 0; j < i; ++j)
      if (perms[i] == perms[j]) throw std::invalid_argument("duplicate permutations");
  }
}
}  // namespace detail

struct KruskalReport {
  double value = 0.0;  // proj_len or min_l1
  double bound = 0.0;
  double log10_bound = 0.0;
  bool holds = false;
  std::vector<double> z;  // minimiser for the L1 variants
  bool gap_satisfied = true;
  double gap = 0.0;
};

inline KruskalReport kruskal_projection(int n, double phi, const std::vector<Permutation>& perms,
                                        double eps) {
  if (n > 5) throw resource_limit_error("kruskal_projection supports n <= 5");
  detail::check_distinct(perms, n);
  std::vector<std::vector<double>> others;
  for (std::size_t i = 1; i < perms.size(); ++i)
    others.push_back(kernel_column(n, phi, perms[i], false));
  const auto target = kernel_column(n, phi, perms[0], false);
  KruskalReport r;
  r.value = complement_length(target, others);
  const double k = static_cast<double>(perms.size());
  r.log10_bound = k * (n * std::log10(eps) - 0.5 * std::log10(static_cast<double>(factorial(n))));
  r.bound = std::pow(10.0, r.log10_bound);
  r.holds = r.value >= r.bound;
  return r;
}

inline double kruskal_log10_bound(int n, int k, double eps) {
  return -4.0 * k * std::log10(static_cast<double>(n)) + 2.0 * k * k * std::log10(eps) -
         (k * k + 2.0 * k) * std::log10(k + 1.0);
}

// min ||sum z_i c_i||_1 over max|z_i| = 1, solved as 2k pinned LPs.
inline KruskalReport min_l1_over_columns(const std::vector<std::vector<double>>& cols) {
  KruskalReport r;
  r.value = std::numeric_limits<double>::infinity();
  for (int p = 0; p < static_cast<int>(cols.size()); ++p)
    for (double sign : {1.0, -1.0}) {
      const auto res = pinned_l1_min(cols, p, sign);
      if (res.value < r.value) {
        r.value = res.value;
        r.z = res.z;
      }
    }
  return r;
}

inline KruskalReport kruskal_l1(int n, double phi, const std::vector<Permutation>& perms,
                                double eps) {
  detail::check_distinct(perms, n);
  std::vector<std::vector<double>> cols;
  for (const auto& p : perms) cols.push_back(kernel_column(n, phi, p, true));
  auto r = min_l1_over_columns(cols);
  r.log10_bound = kruskal_log10_bound(n, static_cast<int>(perms.size()), eps);
  r.bound = std::pow(10.0, r.log10_bound);
  r.holds = r.value >= r.bound;
  return r;
}

inline double robust_kruskal_log10_gap(int n, int k, double eps) {
  return -std::log10(160.0) - (8.0 * k + 3.0) * std::log10(static_cast<double>(n)) +
         4.0 * k * k * std::log10(eps) - (2.0 * k * k + 4.0 * k + 2.0) * std::log10(k + 1.0);
}

// Heterogeneous-phi columns. With enforce_gap the pairwise phi gap must be
// within the stated bound; otherwise the gap check is only reported.
inline KruskalReport robust_kruskal_perturbed(int n, const std::vector<double>& phis,
                                              const std::vector<Permutation>& perms, double eps,
                                              bool enforce_gap = true) {
  detail::check_distinct(perms, n);
  if (phis.size() != perms.size()) throw std::invalid_argument("one phi per permutation");
  const int k = static_cast<int>(perms.size());
  const double gap = std::pow(10.0, robust_kruskal_log10_gap(n, k, eps));
  bool ok = true;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < i; ++j)
      if (std::abs(phis[i] - phis[j]) > gap) ok = false;
  if (!ok && enforce_gap) throw precondition_violation("phi perturbation exceeds the allowed gap");
  std::vector<std::vector<double>> cols;
  for (int i = 0; i < k; ++i) cols.push_back(kernel_column(n, phis[i], perms[i], true));
  auto r = min_l1_over_columns(cols);
  r.log10_bound = kruskal_log10_bound(n, k, eps) - std::log10(2.0);
  r.bound = std::pow(10.0, r.log10_bound);
  r.holds = r.value >= r.bound;
  r.gap = gap;
  r.gap_satisfied = ok;
  return r;
}

// ---------------------------------------------------------------------------
// Identifiability

struct NonDegeneracy {
  double min_pairwise_tv = 1.0;
  double min_tv_to_uniform = 1.0;
  bool holds(double mu) const { return min_pairwise_tv >= mu && min_tv_to_uniform >= mu; }
};

inline NonDegeneracy non_degeneracy(const std::vector<MallowsModel>& models) {
  NonDegeneracy nd;
  std::vector<DistributionVector> vs;
  for (const auto& m : models) vs.push_back(vectorize(m));
  const int n = models.front().n();
  const DistributionVector uni{n, std::vector<double>(factorial(n), 1.0 / factorial(n))};
  for (std::size_t i = 0; i < vs.size(); ++i) {
    nd.min_tv_to_uniform = std::min(nd.min_tv_to_uniform, tv_exact(vs[i], uni).value);
    for (std::size_t j = 0; j < i; ++j)
      nd.min_pairwise_tv = std::min(nd.min_pairwise_tv, tv_exact(vs[i], vs[j]).value);
  }
  return nd;
}

inline double identifiability_log10_bound(int n, int k, double mu) {
  return 20.0 * k * k * k * std::log10(mu * mu / (10.0 * std::pow(n, 4) * k));
}

struct IdentifiabilityReport {
  double l1 = 0.0;
  double log10_bound = 0.0;
  double bound = 0.0;
  bool holds = false;
  NonDegeneracy nondegeneracy;
};

inline IdentifiabilityReport identifiability_l1(const std::vector<MallowsModel>& models,
                                                const std::vector<double>& coeffs, double mu) {
  if (models.empty() || models.size() != coeffs.size())
    throw std::invalid_argument("one coefficient per model");
  double zmax = 0.0;
  for (double z : coeffs) zmax = std::max(zmax, std::abs(z));
  if (std::abs(zmax - 1.0) > 1e-12) throw std::invalid_argument("coefficients need max|z| = 1");
  IdentifiabilityReport r;
  r.nondegeneracy = non_degeneracy(models);
  if (!r.nondegeneracy.holds(mu)) throw precondition_violation("collection is not mu-non-degenerate");
  r.l1 = l1_combination(models, coeffs);
  r.log10_bound = identifiability_log10_bound(models.front().n(), static_cast<int>(models.size()), mu);
  r.bound = std::pow(10.0, r.log10_bound);
  r.holds = r.l1 > 0.0 && std::log10(r.l1) >= r.log10_bound;
  return r;
}

struct ComponentMatch {
  int left = -1;
  int right = -1;
  double tv = 0.0;
  double weight_gap = 0.0;
  double phi_gap = 0.0;
};

struct MatchingReport {
  double mixture_l1 = 0.0;
  std::vector<ComponentMatch> matches;
};

// Greedy closest-pair matching of the components of two mixtures.
inline MatchingReport match_components(const MallowsMixture& a, const MallowsMixture& b) {
  MatchingReport r;
  const auto va = vectorize(a), vb = vectorize(b);
  for (std::size_t i = 0; i < va.values.size(); ++i) r.mixture_l1 += std::abs(va.values[i] - vb.values[i]);
  std::vector<std::vector<double>> tv(a.k(), std::vector<double>(b.k()));
  for (int i = 0; i < a.k(); ++i)
    for (int j = 0; j < b.k(); ++j) tv[i][j] = tv_exact(a.components[i], b.components[j]).value;
  std::vector<char> ua(a.k(), 0), ub(b.k(), 0);
  for (int step = 0; step < std::min(a.k(), b.k()); ++step) {
    int bi = -1, bj = -1;
    for (int i = 0; i < a.k(); ++i)
      for (int j = 0; j < b.k(); ++j)
        if (!ua[i] && !ub[j] && (bi == -1 || tv[i][j] < tv[bi][bj])) bi = i, bj = j;
    ua[bi] = ub[bj] = 1;
    r.matches.push_back({bi, bj, tv[bi][bj], std::abs(a.weights[bi] - b.weights[bj]),
                         std::abs(a.components[bi].phi - b.components[bj].phi)});
  }
  return r;
}

}  // namespace mallows
