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
#include <limits>
#include <vector>

namespace mallows {

struct LpResult {
  enum class Status { optimal, infeasible, unbounded } status = Status::optimal;
  double value = 0.0;
  std::vector<double> x;
};

// Dense two-phase tableau simplex for
//   maximize c.x  subject to  A x <= b,  x >= 0,
// with b of any sign. Entering and leaving variables follow Bland's rule, so
// the method terminates on degenerate problems.
class DenseSimplex {
 public:
  DenseSimplex(const std::vector<std::vector<double>>& a, const std::vector<double>& b,
               const std::vector<double>& c)
      : m_(static_cast<int>(b.size())),
        n_(static_cast<int>(c.size())),
        basic_(m_),
        nonbasic_(n_ + 1),
        t_(m_ + 2, std::vector<double>(n_ + 2, 0.0)) {
    for (int i = 0; i < m_; ++i) {
      for (int j = 0; j < n_; ++j) t_[i][j] = a[i][j];
      t_[i][n_] = -1.0;  // artificial column
      t_[i][n_ + 1] = b[i];
      basic_[i] = n_ + i;
    }
    for (int j = 0; j < n_; ++j) {
      nonbasic_[j] = j;
      t_[m_][j] = -c[j];
    }
    nonbasic_[n_] = -1;
    t_[m_ + 1][n_] = 1.0;
  }

  LpResult solve() {
    LpResult res;
    int r = 0;
    for (int i = 1; i < m_; ++i)
      if (t_[i][n_ + 1] < t_[r][n_ + 1]) r = i;
    if (m_ > 0 && t_[r][n_ + 1] < -kEps) {
      pivot(r, n_);
      if (!run(true) || t_[m_ + 1][n_ + 1] < -kEps) {
        res.status = LpResult::Status::infeasible;
        return res;
      }
      for (int i = 0; i < m_; ++i)
        if (basic_[i] == -1) {
          int s = -1;
          for (int j = 0; j <= n_; ++j)
            if (std::abs(t_[i][j]) > kEps && (s == -1 || nonbasic_[j] < nonbasic_[s])) s = j;
          if (s != -1) pivot(i, s);
        }
    }
    if (!run(false)) {
      res.status = LpResult::Status::unbounded;
      return res;
    }
    res.x.assign(n_, 0.0);
    for (int i = 0; i < m_; ++i)
      if (basic_[i] >= 0 && basic_[i] < n_) res.x[basic_[i]] = t_[i][n_ + 1];
    res.value = t_[m_][n_ + 1];
    return res;
  }

 private:
  static constexpr double kEps = 1e-12;

  void pivot(int r, int s) {
    const double inv = 1.0 / t_[r][s];
    for (int i = 0; i < m_ + 2; ++i) {
      if (i == r || t_[i][s] == 0.0) continue;
      const double f = t_[i][s] * inv;
      for (int j = 0; j < n_ + 2; ++j)
        if (j != s) t_[i][j] -= t_[r][j] * f;
      t_[i][s] = -f;
    }
    for (int j = 0; j < n_ + 2; ++j)
      if (j != s) t_[r][j] *= inv;
    t_[r][s] = inv;
    std::swap(basic_[r], nonbasic_[s]);
  }

  bool run(bool phase_one) {
    const int obj = phase_one ? m_ + 1 : m_;
    for (;;) {
      int s = -1;
      for (int j = 0; j <= n_; ++j) {
        if (!phase_one && nonbasic_[j] == -1) continue;
        if (t_[obj][j] < -kEps && (s == -1 || nonbasic_[j] < nonbasic_[s])) s = j;
      }
      if (s == -1) return true;
      int r = -1;
      for (int i = 0; i < m_; ++i) {
        if (t_[i][s] <= kEps) continue;
        if (r == -1) {
          r = i;
          continue;
        }
        const double lhs = t_[i][n_ + 1] / t_[i][s];
        const double rhs = t_[r][n_ + 1] / t_[r][s];
        if (lhs < rhs - kEps || (std::abs(lhs - rhs) <= kEps && basic_[i] < basic_[r])) r = i;
      }
      if (r == -1) return false;
      pivot(r, s);
    }
  }

  int m_, n_;
  std::vector<int> basic_, nonbasic_;
  std::vector<std::vector<double>> t_;
};

// min_z ||sum_i z_i c_i||_1 with z_p = sign fixed and |z_i| <= 1 otherwise.
// Columns are given as cols[i][row].
struct PinnedL1Result {
  double value;
  std::vector<double> z;
};

inline PinnedL1Result pinned_l1_min(const std::vector<std::vector<double>>& cols, int pinned,
                                    double sign) {
  const int k = static_cast<int>(cols.size());
  const int rows = static_cast<int>(cols.front().size());
  // variables: u_i = z_i + 1 in [0, 2] for i != pinned, then t_j >= 0
  std::vector<int> free_idx;
  for (int i = 0; i < k; ++i)
    if (i != pinned) free_idx.push_back(i);
  const int nu = static_cast<int>(free_idx.size());
  const int nv = nu + rows;
  std::vector<std::vector<double>> a;
  std::vector<double> b;
  for (int j = 0; j < rows; ++j) {
    double base = sign * cols[pinned][j];  // residual at u = 0: base - sum c_ij
    for (int f : free_idx) base -= cols[f][j];
    std::vector<double> row(nv, 0.0);
    for (int q = 0; q < nu; ++q) row[q] = cols[free_idx[q]][j];
    row[nu + j] = -1.0;
    a.push_back(row);
    b.push_back(-base);
    for (int q = 0; q < nu; ++q) row[q] = -cols[free_idx[q]][j];
    a.push_back(row);
    b.push_back(base);
  }
  for (int q = 0; q < nu; ++q) {
    std::vector<double> row(nv, 0.0);
    row[q] = 1.0;
    a.push_back(row);
    b.push_back(2.0);
  }
  std::vector<double> c(nv, 0.0);
  for (int j = 0; j < rows; ++j) c[nu + j] = -1.0;
  const auto res = DenseSimplex(a, b, c).solve();
  PinnedL1Result out{-res.value, std::vector<double>(k, 0.0)};
  out.z[pinned] = sign;
  for (int q = 0; q < nu; ++q) out.z[free_idx[q]] = res.x[q] - 1.0;
  // report the objective recomputed at the returned point
  double s = 0.0;
  for (int j = 0; j < rows; ++j) {
    double r = 0.0;
    for (int i = 0; i < k; ++i) r += out.z[i] * cols[i][j];
    s += std::abs(r);
  }
  out.value = s;
  return out;
}

}  // namespace mallows
