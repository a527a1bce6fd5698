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

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mallows/measure.hpp"

namespace mallows {

struct BlockStructure {
  std::vector<std::vector<int>> blocks;  // each block as a set; order of blocks matters
  int size() const {
    int s = 0;
    for (const auto& b : blocks) s += static_cast<int>(b.size());
    return s;
  }
};

struct OrderStructure {
  std::vector<std::vector<int>> chains;
};

struct OrderedBlockStructure {
  std::vector<std::vector<int>> blocks;
};

namespace detail {

inline void check_disjoint(const std::vector<std::vector<int>>& blocks, int n) {
  std::vector<char> seen(n + 1, 0);
  for (const auto& b : blocks)
    for (int e : b) {
      if (e < 1 || e > n) throw std::invalid_argument("structure element out of range");
      if (seen[e]) throw std::invalid_argument("structure blocks must be disjoint");
      seen[e] = 1;
    }
}

// Blocks consecutive and in the listed order; pos is element -> 0-based position.
template <class Pos>
bool blocks_consecutive_in_order(const std::vector<std::vector<int>>& blocks, const Pos& pos) {
  int prev_end = -1;
  for (const auto& b : blocks) {
    if (b.empty()) continue;
    int lo = 1 << 30, hi = -1;
    for (int e : b) {
      lo = std::min<int>(lo, pos[e - 1]);
      hi = std::max<int>(hi, pos[e - 1]);
    }
    if (hi - lo + 1 != static_cast<int>(b.size())) return false;
    if (lo <= prev_end) return false;
    prev_end = hi;
  }
  return true;
}

template <class Pos>
bool chains_in_order(const std::vector<std::vector<int>>& chains, const Pos& pos) {
  for (const auto& c : chains)
    for (std::size_t i = 1; i < c.size(); ++i)
      if (pos[c[i - 1] - 1] > pos[c[i] - 1]) return false;
  return true;
}

// Any 3-cycle of a non-transitive tournament.
inline std::array<int, 3> find_cycle(const std::vector<int>& elems,
                                     const std::vector<std::vector<char>>& prec) {
  for (int a : elems)
    for (int b : elems)
      if (prec[a][b])
        for (int c : elems)
          if (prec[b][c] && prec[c][a]) return {a, b, c};
  return {0, 0, 0};
}

}  // namespace detail

inline bool satisfies(const Permutation& p, const BlockStructure& s) {
  detail::check_disjoint(s.blocks, p.n());
  return detail::blocks_consecutive_in_order(s.blocks, p.positions());
}

inline bool satisfies(const Permutation& p, const OrderStructure& s) {
  const auto pos = p.positions();
  return detail::chains_in_order(s.chains, pos);
}

inline bool satisfies(const Permutation& p, const OrderedBlockStructure& s) {
  detail::check_disjoint(s.blocks, p.n());
  const auto pos = p.positions();
  return detail::blocks_consecutive_in_order(s.blocks, pos) &&
         detail::chains_in_order(s.blocks, pos);
}

// Index of the inner ordering of a block: lexicographic rank of the block's
// elements sorted by position, relative to the sorted element set.
template <class Pos>
std::uint64_t inner_ordering_index(const std::vector<int>& sorted_block, const Pos& pos) {
  const int m = static_cast<int>(sorted_block.size());
  int order[16];
  for (int i = 0; i < m; ++i) order[i] = i;
  std::sort(order, order + m,
            [&](int a, int b) { return pos[sorted_block[a] - 1] < pos[sorted_block[b] - 1]; });
  return lex_rank(order, m);
}

// Ordering of a sorted block with lexicographic index `idx`, as labels.
inline Ranking inner_ordering(const std::vector<int>& sorted_block, std::uint64_t idx) {
  const Permutation rel = lex_unrank(static_cast<int>(sorted_block.size()), idx);
  Ranking out;
  for (int i = 0; i < rel.n(); ++i) out.push_back(sorted_block[rel[i] - 1]);
  return out;
}

struct MomentTensor {
  std::vector<int> dims;
  std::vector<double> entries;

  std::size_t flat_index(const std::vector<std::uint64_t>& idx) const {
    std::size_t f = 0;
    for (std::size_t i = 0; i < dims.size(); ++i) f = f * dims[i] + idx[i];
    return f;
  }
  double sum() const { return std::accumulate(entries.begin(), entries.end(), 0.0); }
};

inline std::vector<std::vector<int>> sorted_blocks(const BlockStructure& b) {
  auto out = b.blocks;
  for (auto& s : out) std::sort(s.begin(), s.end());
  return out;
}

// Entry (o_1..o_j) = measure of {pi satisfies B with inner orderings o_1..o_j}.
inline MomentTensor block_tensor(const PermMeasure& m, const BlockStructure& b) {
  detail::check_disjoint(b.blocks, m.n());
  for (const auto& s : b.blocks)
    if (s.size() > 10) throw std::invalid_argument("block too large for a dense tensor");
  const auto sb = sorted_blocks(b);
  MomentTensor t;
  std::size_t total = 1;
  for (const auto& s : sb) {
    t.dims.push_back(static_cast<int>(factorial(static_cast<int>(s.size()))));
    total *= t.dims.back();
  }
  t.entries.assign(total, 0.0);
  std::vector<std::uint64_t> idx(sb.size());
  for (std::size_t a = 0; a < m.size(); ++a) {
    const auto* pos = m.positions(a);
    if (!detail::blocks_consecutive_in_order(b.blocks, pos)) continue;
    for (std::size_t i = 0; i < sb.size(); ++i) idx[i] = inner_ordering_index(sb[i], pos);
    t.entries[t.flat_index(idx)] += m.weight(a);
  }
  return t;
}

inline MomentTensor block_tensor(const PlacementOracle& oracle, const BlockStructure& b) {
  return block_tensor(oracle.measure(), b);
}

inline double block_prob(const MallowsModel& model, const BlockStructure& b) {
  const auto m = PermMeasure::exact(model);
  detail::check_disjoint(b.blocks, model.n());
  return m.expectation([&](const std::uint8_t*, const std::uint8_t* pos) {
    return detail::blocks_consecutive_in_order(b.blocks, pos) ? 1.0 : 0.0;
  });
}

// v(M(phi, order)) over the orderings of the element set of `order`, indexed
// lexicographically.
inline std::vector<double> local_vector(double phi, const Ranking& order) {
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  const int m = static_cast<int>(order.size());
  const auto w = detail::distance_weights(m, phi);
  std::vector<int> cpos(m);
  for (int i = 0; i < m; ++i)
    cpos[std::lower_bound(sorted.begin(), sorted.end(), order[i]) - sorted.begin()] = i;
  std::vector<double> out(factorial(m));
  std::vector<int> r(m);
  std::iota(r.begin(), r.end(), 0);
  std::size_t k = 0;
  do {
    int d = 0;
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if (cpos[r[i]] > cpos[r[j]]) ++d;
    out[k++] = w[d];
  } while (std::next_permutation(r.begin(), r.end()));
  return out;
}

struct TestVector {
  std::vector<double> values;
  std::vector<int> block;  // sorted element set it tests (may be empty)
};

// Coordinates are (first-before-second, second-before-first) for the pair in
// the stated order; orthogonal to v(M(phi, pair in that order)).
inline TestVector pair_test_vector(double phi, bool x_first) {
  if (!(phi >= 0.0 && phi < 1.0)) throw std::invalid_argument("pair_test_vector: phi in [0,1)");
  const double d = 1.0 + phi;
  if (x_first) return {{phi / d, -1.0 / d}, {}};
  return {{1.0 / d, -phi / d}, {}};
}

// Pair test vector in the lexicographic coordinates of the sorted pair {a, b},
// annihilating v(M(phi, (first, second))).
inline std::vector<double> pair_test_vector_lex(double phi, int first, int second) {
  const auto tv = pair_test_vector(phi, true);
  if (first < second) return tv.values;
  return {tv.values[1], tv.values[0]};
}

constexpr double kDegeneracyTolerance = 1e-10;

// Unit vector orthogonal to `others` with positive inner product with target
// (modified Gram-Schmidt with a second orthogonalisation pass).
inline TestVector ortho_test_vector(const std::vector<double>& target,
                                    const std::vector<std::vector<double>>& others) {
  const std::size_t dim = target.size();
  std::vector<std::vector<double>> basis;
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  auto project_out = [&](std::vector<double>& v) {
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) {
        const double c = dot(v, q);
        for (std::size_t i = 0; i < dim; ++i) v[i] -= c * q[i];
      }
  };
  for (const auto& o : others) {
    if (o.size() != dim) throw std::invalid_argument("ortho_test_vector: dimension mismatch");
    auto v = o;
    const double before = std::sqrt(dot(v, v));
    project_out(v);
    const double len = std::sqrt(dot(v, v));
    if (len <= kDegeneracyTolerance * std::max(1.0, before)) continue;  // dependent on earlier ones
    for (auto& x : v) x /= len;
    basis.push_back(std::move(v));
  }
  auto v = target;
  const double before = std::sqrt(dot(v, v));
  project_out(v);
  const double len = std::sqrt(dot(v, v));
  if (len <= kDegeneracyTolerance * std::max(1.0, before))
    throw degenerate_input_error("target lies in the span of the other vectors");
  for (auto& x : v) x /= len;
  return {v, {}};
}

// Projection length of target onto the orthogonal complement of others.
inline double complement_length(const std::vector<double>& target,
                                const std::vector<std::vector<double>>& others) {
  try {
    const auto t = ortho_test_vector(target, others);
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) s += t.values[i] * target[i];
    return s;
  } catch (const degenerate_input_error&) {
    return 0.0;
  }
}

// <v_1 (x) ... (x) v_j, T>
inline double contract(const MomentTensor& t, const std::vector<std::vector<double>>& vs) {
  double s = 0.0;
  std::vector<std::uint64_t> idx(t.dims.size(), 0);
  for (std::size_t f = 0; f < t.entries.size(); ++f) {
    std::size_t rem = f;
    double coef = 1.0;
    for (int i = static_cast<int>(t.dims.size()) - 1; i >= 0; --i) {
      coef *= vs[i][rem % t.dims[i]];
      rem /= t.dims[i];
    }
    s += coef * t.entries[f];
  }
  return s;
}

}  // namespace mallows
