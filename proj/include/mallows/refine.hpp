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

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multifit_nlinear.h>
#include <gsl/gsl_vector.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mallows/mallows.hpp"

namespace mallows {

// residuals(x, r): fill r (size m) for parameters x.
using ResidualFn = std::function<void(const std::vector<double>&, std::vector<double>&)>;

struct LeastSquaresResult {
  std::vector<double> x;
  double cost = 0.0;  // 0.5 * |r|^2 at x
  int iterations = 0;
  bool converged = false;
};

// Trust-region Levenberg-Marquardt with a finite-difference Jacobian.
inline LeastSquaresResult least_squares(const ResidualFn& f, std::vector<double> x0, std::size_t m,
                                        int max_iter = 200) {
  struct Ctx {
    const ResidualFn* f;
    std::vector<double> x, r;
  } ctx{&f, x0, std::vector<double>(m)};
  const std::size_t p = x0.size();
  auto eval = [](const gsl_vector* x, void* data, gsl_vector* out) -> int {
    auto* c = static_cast<Ctx*>(data);
    for (std::size_t i = 0; i < c->x.size(); ++i) c->x[i] = gsl_vector_get(x, i);
    (*c->f)(c->x, c->r);
    for (std::size_t i = 0; i < c->r.size(); ++i) gsl_vector_set(out, i, c->r[i]);
    return GSL_SUCCESS;
  };
  gsl_multifit_nlinear_fdf fdf;
  fdf.f = eval;
  fdf.df = nullptr;
  fdf.fvv = nullptr;
  fdf.n = m;
  fdf.p = p;
  fdf.params = &ctx;

  gsl_set_error_handler_off();
  auto params = gsl_multifit_nlinear_default_parameters();
  gsl_multifit_nlinear_workspace* w =
      gsl_multifit_nlinear_alloc(gsl_multifit_nlinear_trust, &params, m, p);
  gsl_vector* x = gsl_vector_alloc(p);
  for (std::size_t i = 0; i < p; ++i) gsl_vector_set(x, i, x0[i]);
  gsl_multifit_nlinear_init(x, &fdf, w);
  int info = 0;
  const int status = gsl_multifit_nlinear_driver(static_cast<std::size_t>(max_iter), 1e-14, 1e-14,
                                                 1e-15, nullptr, nullptr, &info, w);
  LeastSquaresResult res;
  const gsl_vector* xs = gsl_multifit_nlinear_position(w);
  res.x.resize(p);
  for (std::size_t i = 0; i < p; ++i) res.x[i] = gsl_vector_get(xs, i);
  const gsl_vector* r = gsl_multifit_nlinear_residual(w);
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) ss += gsl_vector_get(r, i) * gsl_vector_get(r, i);
  res.cost = 0.5 * ss;
  res.iterations = static_cast<int>(gsl_multifit_nlinear_niter(w));
  res.converged = status == GSL_SUCCESS;
  gsl_vector_free(x);
  gsl_multifit_nlinear_free(w);
  return res;
}

// Fits weights and scaling parameters of a mixture with fixed centres to a
// target mass function (lexicographic index). phi = sin^2(a), w = b^2/sum b^2
// with b_1 fixed at 1.
struct MixtureFit {
  std::vector<double> weights;
  std::vector<double> phis;
  double l1 = 0.0;  // L1 distance to the target at the fit
};

inline MixtureFit fit_mixture_parameters(const std::vector<double>& target,
                                         const std::vector<Permutation>& centers,
                                         std::vector<double> w0, std::vector<double> phi0) {
  const int k = static_cast<int>(centers.size());
  const int n = centers.front().n();
  const std::size_t size = target.size();
  // distance of every permutation to every centre
  std::vector<std::vector<std::uint16_t>> dist(k);
  for (int i = 0; i < k; ++i) {
    const auto cpos = centers[i].positions();
    dist[i].reserve(size);
    for_each_permutation(n, [&](const std::vector<int>& r) {
      int d = 0;
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
          if (cpos[r[a] - 1] > cpos[r[b] - 1]) ++d;
      dist[i].push_back(static_cast<std::uint16_t>(d));
    });
  }
  auto decode = [k](const std::vector<double>& x, std::vector<double>& w, std::vector<double>& phi) {
    w.assign(k, 0.0);
    phi.assign(k, 0.0);
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
      phi[i] = std::sin(x[i]) * std::sin(x[i]);
      w[i] = i == 0 ? 1.0 : x[k + i - 1] * x[k + i - 1];
      s += w[i];
    }
    for (auto& v : w) v = s > 0.0 ? v / s : 1.0 / k;
  };
  auto model = [&](const std::vector<double>& w, const std::vector<double>& phi, std::vector<double>& out) {
    out.assign(size, 0.0);
    for (int i = 0; i < k; ++i) {
      const auto dw = detail::distance_weights(n, phi[i]);
      for (std::size_t j = 0; j < size; ++j) out[j] += w[i] * dw[dist[i][j]];
    }
  };
  std::vector<double> x0(2 * k - 1);
  for (int i = 0; i < k; ++i) {
    x0[i] = std::asin(std::sqrt(std::clamp(phi0[i], 0.0, 1.0)));
    if (i > 0) x0[k + i - 1] = std::sqrt(std::max(w0[i], 1e-6) / std::max(w0[0], 1e-6));
  }
  std::vector<double> w, phi, mv;
  MixtureFit fit;
  if (size < x0.size()) {
    fit.weights = w0;
    fit.phis = phi0;
    model(w0, phi0, mv);
    for (std::size_t j = 0; j < size; ++j) fit.l1 += std::abs(mv[j] - target[j]);
    return fit;
  }
  const auto res = least_squares(
      [&](const std::vector<double>& x, std::vector<double>& r) {
        decode(x, w, phi);
        model(w, phi, mv);
        for (std::size_t j = 0; j < size; ++j) r[j] = mv[j] - target[j];
      },
      x0, size);
  decode(res.x, fit.weights, fit.phis);
  model(fit.weights, fit.phis, mv);
  for (std::size_t j = 0; j < size; ++j) fit.l1 += std::abs(mv[j] - target[j]);
  return fit;
}

}  // namespace mallows
