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
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "mallows/refine.hpp"
#include "mallows/structures.hpp"

namespace mallows {

struct CandidateEntry {
  double weight = 0.0;
  double phi = 0.0;
  Permutation center;

  friend bool operator<(const CandidateEntry& a, const CandidateEntry& b) {
    if (a.center != b.center) return a.center < b.center;
    if (a.phi != b.phi) return a.phi < b.phi;
    return a.weight < b.weight;
  }
};

struct LearnerBudget {
  double beta = 0.05;               // phi grid step
  std::vector<double> phi_grid;     // explicit grid; overrides beta when non-empty
  double alpha = 0.1;               // weight floor
  double mu = 0.05;                 // pairwise separation
  double theta = 0.05;              // target accuracy
  double delta = 0.05;              // failure probability
  int moment_order = 0;             // 0 selects min(10 k^2, n)
  double small_weight_step = 0.1;   // weight grid for small-phi removal
  std::size_t max_small_subsets = 64;
  std::size_t max_candidates = 50000;
  std::size_t max_paths = 12;       // tuples refined and tested
  bool refine = true;
  int workers = 1;
  std::uint64_t seed = 0;

  double eps(int n) const { return mu * mu / (10.0 * n * n * n); }
  int order(int n, int k) const {
    return moment_order > 0 ? std::min(moment_order, n) : std::min(10 * k * k, n);
  }
};

inline std::vector<double> phi_grid(const LearnerBudget& b) {
  if (!b.phi_grid.empty()) return b.phi_grid;
  if (!(b.beta > 0.0 && b.beta < 1.0)) throw std::invalid_argument("grid step must lie in (0,1)");
  std::vector<double> g;
  for (int j = 1; j * b.beta < 1.0 - 1e-12; ++j) g.push_back(j * b.beta);
  return g;
}

struct LearnerDiagnostics {
  std::size_t configurations = 0;
  std::size_t guesses = 0;
  std::size_t ties = 0;
  std::size_t recovery_failures = 0;
  std::size_t degenerate_guesses = 0;

  void merge(const LearnerDiagnostics& o) {
    configurations += o.configurations;
    guesses += o.guesses;
    ties += o.ties;
    recovery_failures += o.recovery_failures;
    degenerate_guesses += o.degenerate_guesses;
  }
};

// ---------------------------------------------------------------------------
// Small scaling parameters

// Permutations carrying at least alpha/4 of the mass, heaviest first, at most
// 4/alpha of them.
inline std::vector<Permutation> small_phi_candidates(const PermMeasure& m, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0,1]");
  std::vector<std::pair<double, Permutation>> heavy;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.weight(i) >= alpha / 4.0) heavy.emplace_back(m.weight(i), m.permutation(i));
  std::sort(heavy.begin(), heavy.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  const auto cap = static_cast<std::size_t>(std::floor(4.0 / alpha));
  std::vector<Permutation> out;
  for (std::size_t i = 0; i < heavy.size() && i < cap; ++i) out.push_back(heavy[i].second);
  return out;
}

inline std::vector<Permutation> small_phi_candidates(const std::vector<Permutation>& samples,
                                                     double alpha) {
  return small_phi_candidates(PermMeasure::empirical(samples), alpha);
}

inline PermMeasure remove_small_phi(const PermMeasure& v, const std::vector<CandidateEntry>& guesses) {
  PermMeasure out = v;
  for (const auto& g : guesses)
    out.add_scaled(PermMeasure::exact(MallowsModel(g.phi, g.center)), -g.weight);
  return out;
}

inline MomentVector remove_small_phi(const MomentVector& v, int n, int c,
                                     const std::vector<CandidateEntry>& guesses) {
  MomentVector out = v;
  for (const auto& g : guesses)
    for (const auto& [q, val] : moment_vector(MallowsMixture(MallowsModel(g.phi, g.center)), c))
      out[q] -= g.weight * val;
  (void)n;
  return out;
}

// ---------------------------------------------------------------------------
// One component when the competitors share its scaling parameter

struct SamePhiGuess {
  std::vector<Ranking> blocks;               // as ordered by the target centre
  std::vector<std::vector<Ranking>> others;  // others[i][a]: block a as ordered by competitor i
  double sign = 1.0;                         // sign of the isolated coefficient
};

struct SamePhiResult {
  std::vector<Permutation> centers;
  double contraction = 0.0;  // <v_1 (x) ... (x) v_j, T> over all atoms satisfying the blocks
  std::size_t ties = 0;
};

namespace detail {

inline std::vector<std::vector<double>> block_test_vectors(double phi, const SamePhiGuess& g) {
  std::vector<std::vector<double>> out;
  for (std::size_t a = 0; a < g.blocks.size(); ++a) {
    std::vector<std::vector<double>> others;
    for (const auto& o : g.others)
      if (o[a] != g.blocks[a]) others.push_back(local_vector(phi, o[a]));
    out.push_back(ortho_test_vector(local_vector(phi, g.blocks[a]), others).values);
  }
  return out;
}

// w * prod_a tv_a[inner ordering of block a] over atoms satisfying the blocks.
struct BlockContraction {
  std::vector<Ranking> blocks;
  std::vector<std::vector<int>> sorted;
  std::vector<std::vector<double>> tvs;

  template <class Pos>
  double coef(const Pos& pos) const {
    if (!blocks_consecutive_in_order(blocks, pos)) return 0.0;
    double c = 1.0;
    for (std::size_t a = 0; a < sorted.size(); ++a) c *= tvs[a][inner_ordering_index(sorted[a], pos)];
    return c;
  }

  double total(const PermMeasure& m) const {
    if (blocks.empty()) return m.mass();
    return m.expectation([&](const std::uint8_t*, const std::uint8_t* pos) { return coef(pos); });
  }
};

inline BlockContraction make_block_contraction(double phi, const SamePhiGuess& g) {
  BlockContraction bc;
  bc.blocks = g.blocks;
  for (auto b : g.blocks) {
    std::sort(b.begin(), b.end());
    bc.sorted.push_back(b);
  }
  bc.tvs = block_test_vectors(phi, g);
  return bc;
}

// Every way of inserting the runs, in order, into the gaps of base.
inline void insert_runs(const Ranking& base, const std::vector<Ranking>& runs,
                        std::vector<Ranking>& out) {
  std::vector<std::size_t> gap(runs.size(), 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t r, std::size_t from) {
    if (r == runs.size()) {
      Ranking seq;
      std::size_t next = 0;
      for (std::size_t g = 0; g <= base.size(); ++g) {
        while (next < runs.size() && gap[next] == g) {
          seq.insert(seq.end(), runs[next].begin(), runs[next].end());
          ++next;
        }
        if (g < base.size()) seq.push_back(base[g]);
      }
      out.push_back(std::move(seq));
      return;
    }
    for (std::size_t g = from; g <= base.size(); ++g) {
      gap[r] = g;
      rec(r + 1, g);
    }
  };
  rec(0, 0);
}

// Every arrangement of units (kept contiguous, any relative order) among base.
inline void insert_units_any_order(const Ranking& base, const std::vector<Ranking>& units,
                                   std::vector<Ranking>& out) {
  std::function<void(const Ranking&, std::size_t)> rec = [&](const Ranking& cur, std::size_t u) {
    if (u == units.size()) {
      out.push_back(cur);
      return;
    }
    // slots that do not split an already inserted unit
    std::vector<char> inside(cur.size() + 1, 0);
    for (std::size_t v = 0; v < u; ++v) {
      const auto it = std::find(cur.begin(), cur.end(), units[v].front());
      const auto start = static_cast<std::size_t>(it - cur.begin());
      for (std::size_t s = start + 1; s < start + units[v].size(); ++s) inside[s] = 1;
    }
    for (std::size_t s = 0; s <= cur.size(); ++s) {
      if (inside[s]) continue;
      Ranking next(cur.begin(), cur.begin() + static_cast<std::ptrdiff_t>(s));
      next.insert(next.end(), units[u].begin(), units[u].end());
      next.insert(next.end(), cur.begin() + static_cast<std::ptrdiff_t>(s), cur.end());
      rec(next, u + 1);
    }
  };
  rec(base, 0);
}

inline double log_list_bound(int n, int k) {
  return 4.0 * k * std::log(static_cast<double>(n)) +
         k * std::lgamma(2.0 * k + 1.0);
}

}  // namespace detail

// Recovers the target centre on the measure's ground set: pairwise orders of
// the elements outside the guessed blocks from the contracted split tensors,
// then every placement of the blocks.
inline SamePhiResult learn_single_same_phi(const PermMeasure& v, double phi, const SamePhiGuess& guess) {
  const int m = v.n();
  SamePhiResult res;
  if (m == 0) return res;
  detail::check_disjoint(guess.blocks, m);
  for (const auto& o : guess.others)
    if (o.size() != guess.blocks.size()) throw std::invalid_argument("one ordering per block per competitor");
  const auto bc = detail::make_block_contraction(phi, guess);
  std::vector<char> in_block(m + 1, 0);
  for (const auto& b : guess.blocks)
    for (int e : b) in_block[e] = 1;
  std::vector<int> outside;
  for (int e = 1; e <= m; ++e)
    if (!in_block[e]) outside.push_back(e);

  std::vector<std::vector<double>> before(m + 1, std::vector<double>(m + 1, 0.0));
  for (std::size_t a = 0; a < v.size(); ++a) {
    const auto* pos = v.positions(a);
    const double c = v.weight(a) * (guess.blocks.empty() ? 1.0 : bc.coef(pos));
    if (c == 0.0) continue;
    res.contraction += c;
    for (std::size_t i = 0; i < outside.size(); ++i)
      for (std::size_t j = i + 1; j < outside.size(); ++j) {
        const int x = outside[i], y = outside[j];
        if (pos[x - 1] < pos[y - 1]) before[x][y] += c;
        else before[y][x] += c;
      }
  }
  std::vector<std::vector<char>> prec(m + 1, std::vector<char>(m + 1, 0));
  std::vector<int> wins(m + 1, 0);
  for (std::size_t i = 0; i < outside.size(); ++i)
    for (std::size_t j = i + 1; j < outside.size(); ++j) {
      const int x = outside[i], y = outside[j];
      const double sx = guess.sign * before[x][y], sy = guess.sign * before[y][x];
      bool x_first = sx > sy;
      if (sx == sy) {
        ++res.ties;
        x_first = x < y;
      }
      prec[x][y] = x_first;
      prec[y][x] = !x_first;
      ++wins[x_first ? x : y];
    }
  Ranking order = outside;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return wins[a] > wins[b]; });
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j)
      if (!prec[order[i]][order[j]]) {
        const auto t = detail::find_cycle(outside, prec);
        throw recovery_failure("pairwise orders are not transitive", t[0], t[1], t[2]);
      }
  std::vector<Ranking> seqs;
  detail::insert_runs(order, guess.blocks, seqs);
  const int k = 1 + static_cast<int>(guess.others.size());
  if (std::log(static_cast<double>(seqs.size())) > detail::log_list_bound(m, k) + 1e-9)
    throw std::logic_error("candidate list exceeds n^{4k}((2k)!)^k");
  for (auto& s : seqs) res.centers.emplace_back(std::move(s));
  return res;
}

// ---------------------------------------------------------------------------
// One component of a general mixture

namespace detail {

// Contracts the pair factors: keeps atoms whose first 2d positions hold the
// pairs in order (each pair either way round), weights them by
// prod_a z_a[flip_a] and returns the induced signed measure on the remaining
// elements, relabelled 1..|X| by sorted order.
inline PermMeasure contract_pairs(const PermMeasure& v, const std::vector<std::pair<int, int>>& pairs,
                                  const std::vector<std::array<double, 2>>& z) {
  const int n = v.n();
  const int d = static_cast<int>(pairs.size());
  if (d == 0) return v;
  std::vector<int> relabel(n + 1, 0);
  std::vector<char> in_pair(n + 1, 0);
  for (auto [x, y] : pairs) in_pair[x] = in_pair[y] = 1;
  int next = 0;
  for (int e = 1; e <= n; ++e)
    if (!in_pair[e]) relabel[e] = ++next;
  PermMeasure out(n - 2 * d);
  std::vector<std::uint8_t> buf(n - 2 * d);
  for (std::size_t a = 0; a < v.size(); ++a) {
    const auto* pos = v.positions(a);
    double coef = v.weight(a);
    for (int i = 0; i < d && coef != 0.0; ++i) {
      const int px = pos[pairs[i].first - 1], py = pos[pairs[i].second - 1];
      if (std::min(px, py) != 2 * i || std::max(px, py) != 2 * i + 1) coef = 0.0;
      else coef *= z[i][px > py ? 1 : 0];
    }
    if (coef == 0.0) continue;
    const auto* r = v.ranking(a);
    for (int i = 2 * d; i < n; ++i) buf[i - 2 * d] = static_cast<std::uint8_t>(relabel[r[i]]);
    out.add(buf.data(), coef);
  }
  return out;
}

struct ScoredCandidate {
  CandidateEntry entry;
  double contrast = 0.0;  // |model-side contraction|; larger isolates better
};

using CandidateMap = std::map<std::pair<std::uint64_t, int>, ScoredCandidate>;

inline void keep_better(CandidateMap& m, std::pair<std::uint64_t, int> key, const ScoredCandidate& c) {
  auto it = m.find(key);
  if (it == m.end()) {
    m.emplace(key, c);
    return;
  }
  const auto& old = it->second;
  if (c.contrast > old.contrast || (c.contrast == old.contrast && c.entry.weight < old.entry.weight))
    it->second = c;
}

// Same-group guesses over ground set 1..m for s competitors.
inline std::vector<SamePhiGuess> same_group_guesses(int m, int s) {
  std::vector<SamePhiGuess> out;
  if (s == 0) {
    out.emplace_back();
    return out;
  }
  std::vector<std::pair<int, int>> all;
  for (int a = 1; a <= m; ++a)
    for (int b = 1; b <= m; ++b)
      if (a != b) all.emplace_back(a, b);
  std::vector<std::size_t> pick(s, 0);
  std::function<void(int)> rec = [&](int i) {
    if (i == s) {
      // chain the designated pairs into blocks
      std::map<int, int> succ, pred;
      for (int t = 0; t < s; ++t) {
        auto [a, b] = all[pick[t]];
        auto sa = succ.find(a);
        auto pb = pred.find(b);
        if (sa != succ.end() && sa->second != b) return;
        if (pb != pred.end() && pb->second != a) return;
        succ[a] = b;
        pred[b] = a;
      }
      std::vector<Ranking> chains;
      for (auto [a, b] : succ) {
        if (pred.count(a)) continue;
        Ranking c{a};
        int cur = a;
        while (succ.count(cur)) {
          cur = succ[cur];
          if (c.size() > static_cast<std::size_t>(m)) return;  // cycle
          c.push_back(cur);
        }
        chains.push_back(c);
      }
      std::size_t covered = 0;
      for (const auto& c : chains) covered += c.size();
      if (covered != succ.size() + chains.size()) return;  // a cycle left elements out
      std::vector<std::size_t> perm(chains.size());
      std::iota(perm.begin(), perm.end(), 0);
      do {
        SamePhiGuess g;
        for (auto p : perm) g.blocks.push_back(chains[p]);
        // orderings of each block per competitor; competitor t inverts its pair
        std::function<void(int)> comp = [&](int t) {
          if (t == s) {
            out.push_back(g);
            return;
          }
          auto [a, b] = all[pick[t]];
          std::vector<std::vector<Ranking>> per_block;
          for (const auto& blk : g.blocks) {
            std::vector<Ranking> ords;
            Ranking sorted = blk;
            std::sort(sorted.begin(), sorted.end());
            do {
              const auto pa = std::find(sorted.begin(), sorted.end(), a);
              const auto pb = std::find(sorted.begin(), sorted.end(), b);
              if (pa != sorted.end() && pb != sorted.end() && pa < pb) continue;
              ords.push_back(sorted);
            } while (std::next_permutation(sorted.begin(), sorted.end()));
            per_block.push_back(ords);
          }
          std::vector<Ranking> choice(g.blocks.size());
          std::function<void(std::size_t)> blk = [&](std::size_t q) {
            if (q == g.blocks.size()) {
              g.others.push_back(choice);
              comp(t + 1);
              g.others.pop_back();
              return;
            }
            for (const auto& o : per_block[q]) {
              choice[q] = o;
              blk(q + 1);
            }
          };
          blk(0);
        };
        comp(0);
      } while (std::next_permutation(perm.begin(), perm.end()));
      return;
    }
    for (std::size_t p = (i == 0 ? 0 : pick[i - 1]); p < all.size(); ++p) {
      pick[i] = p;
      rec(i + 1);
    }
  };
  rec(0);
  return out;
}

struct PairConfig {
  std::vector<int> phi_idx;                  // grid index of each different-group competitor
  std::vector<std::pair<int, int>> pairs;    // ordered as in the target centre
  std::vector<char> same_orientation;        // competitor keeps the pair order
};

inline std::vector<PairConfig> pair_configs(int n, int k, std::size_t grid_size) {
  std::vector<PairConfig> out;
  for (int d = 0; d <= k - 1 && 2 * d <= n - 1; ++d) {
    std::vector<int> idx(d, 0);
    std::function<void(int, int)> phis = [&](int i, int from) {
      if (i == d) {
        PairConfig cfg;
        cfg.phi_idx = idx;
        std::vector<char> used(n + 1, 0);
        std::function<void(int)> pairs = [&](int a) {
          if (a == d) {
            const int combos = 1 << d;
            for (int o = 0; o < combos; ++o) {
              cfg.same_orientation.assign(d, 0);
              for (int b = 0; b < d; ++b) cfg.same_orientation[b] = (o >> b) & 1;
              out.push_back(cfg);
            }
            return;
          }
          for (int x = 1; x <= n; ++x)
            for (int y = 1; y <= n; ++y) {
              if (x == y || used[x] || used[y]) continue;
              used[x] = used[y] = 1;
              cfg.pairs.emplace_back(x, y);
              pairs(a + 1);
              cfg.pairs.pop_back();
              used[x] = used[y] = 0;
            }
        };
        pairs(0);
        return;
      }
      for (int g = from; g < static_cast<int>(grid_size); ++g) {
        idx[i] = g;
        phis(i + 1, g);
      }
    };
    phis(0, 0);
  }
  return out;
}

}  // namespace detail

struct GeneralCandidates {
  std::vector<CandidateEntry> entries;  // sorted by (centre, phi, weight)
  std::vector<double> contrasts;        // aligned with entries
  LearnerDiagnostics diagnostics;
};

// Candidate list for one component of a k-mixture: guesses the scaling
// parameters on the grid, distinguishing pairs and orientations for
// competitors with a different parameter, and block structures for
// competitors with the same one. Weights come from the ratio of the data
// contraction to the contraction of the candidate model alone.
inline GeneralCandidates learn_single_general_scored(const PermMeasure& v, int k, const LearnerBudget& b) {
  GeneralCandidates out;
  const int n = v.n();
  if (v.size() == 0 || n == 0 || k < 1) return out;
  const auto grid = phi_grid(b);
  const auto configs = detail::pair_configs(n, k, grid.size());
  std::vector<detail::CandidateMap> slots(configs.size());
  std::vector<LearnerDiagnostics> diag(configs.size());

  parallel_for(configs.size(), b.workers, [&](std::size_t ci) {
    const auto& cfg = configs[ci];
    auto& found = slots[ci];
    auto& dg = diag[ci];
    const int d = static_cast<int>(cfg.pairs.size());
    dg.configurations = 1;
    std::vector<std::array<double, 2>> z(d);
    for (int a = 0; a < d; ++a) {
      const auto tv = pair_test_vector(grid[cfg.phi_idx[a]], cfg.same_orientation[a] != 0);
      z[a] = {tv.values[0], tv.values[1]};
    }
    const PermMeasure u = detail::contract_pairs(v, cfg.pairs, z);
    if (u.size() == 0) return;
    std::vector<int> xs;  // X labels in sorted order
    {
      std::vector<char> in_pair(n + 1, 0);
      for (auto [x, y] : cfg.pairs) in_pair[x] = in_pair[y] = 1;
      for (int e = 1; e <= n; ++e)
        if (!in_pair[e]) xs.push_back(e);
    }
    const int m = static_cast<int>(xs.size());
    const int s = k - 1 - d;
    const auto guesses = detail::same_group_guesses(m, s);
    std::vector<Ranking> units;
    for (auto [x, y] : cfg.pairs) units.push_back({x, y});

    for (int t = 0; t < static_cast<int>(grid.size()); ++t) {
      if (std::find(cfg.phi_idx.begin(), cfg.phi_idx.end(), t) != cfg.phi_idx.end()) continue;
      const double phi = grid[t];
      // isolated coefficient sign from the target's own pair factors
      double pair_sign = 1.0;
      for (int a = 0; a < d; ++a) {
        const double dot = z[a][0] / (1.0 + phi) + z[a][1] * phi / (1.0 + phi);
        pair_sign *= dot > 0 ? 1.0 : -1.0;
      }
      for (auto g : guesses) {
        ++dg.guesses;
        g.sign = pair_sign;
        SamePhiResult res;
        detail::BlockContraction bc;
        try {
          res = learn_single_same_phi(u, phi, g);
          if (!g.blocks.empty()) bc = detail::make_block_contraction(phi, g);
        } catch (const recovery_failure&) {
          ++dg.recovery_failures;
          continue;
        } catch (const degenerate_input_error&) {
          ++dg.degenerate_guesses;
          continue;
        }
        dg.ties += res.ties;
        if (res.contraction == 0.0) continue;
        for (const auto& sigma : res.centers) {
          // model-side block factor on X
          double block_factor = 1.0;
          if (!g.blocks.empty()) block_factor = bc.total(PermMeasure::exact(MallowsModel(phi, sigma)));
          Ranking x_order(m);
          for (int i = 0; i < m; ++i) x_order[i] = xs[sigma[i] - 1];
          std::vector<Ranking> fulls;
          detail::insert_units_any_order(x_order, units, fulls);
          for (auto& full : fulls) {
            const Permutation pi(std::move(full));
            double model = 0.0;
            std::vector<int> seq(2 * d);
            for (int f = 0; f < (1 << d); ++f) {
              double zf = 1.0;
              for (int a = 0; a < d; ++a) {
                const bool flip = (f >> a) & 1;
                seq[2 * a] = flip ? cfg.pairs[a].second : cfg.pairs[a].first;
                seq[2 * a + 1] = flip ? cfg.pairs[a].first : cfg.pairs[a].second;
                zf *= z[a][flip ? 1 : 0];
              }
              model += zf * prefix_prob(phi, pi, seq);
            }
            model *= block_factor;
            if (!(std::abs(model) > 1e-300)) continue;
            const double w = res.contraction / model;
            if (!(w >= b.alpha / 2.0 && w <= 1.25)) continue;
            detail::keep_better(found, {lex_rank(pi), t}, {{w, phi, pi}, std::abs(model)});
          }
        }
      }
    }
  });
  detail::CandidateMap merged;
  for (std::size_t ci = 0; ci < slots.size(); ++ci) {
    out.diagnostics.merge(diag[ci]);
    for (const auto& [key, c] : slots[ci]) detail::keep_better(merged, key, c);
  }
  std::vector<detail::ScoredCandidate> all;
  for (auto& [key, c] : merged) all.push_back(c);
  if (all.size() > b.max_candidates) {
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& c) { return a.contrast > c.contrast; });
    all.resize(b.max_candidates);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& c) { return a.entry < c.entry; });
  for (auto& c : all) {
    out.entries.push_back(c.entry);
    out.contrasts.push_back(c.contrast);
  }
  return out;
}

inline std::vector<CandidateEntry> learn_single_general(const PermMeasure& v, int k, const LearnerBudget& b) {
  return learn_single_general_scored(v, k, b).entries;
}

// ---------------------------------------------------------------------------
// Peeling

struct PeelPath {
  std::vector<CandidateEntry> components;
  double residual_l1 = 0.0;  // L1 of the measure after subtracting every component
};

struct PeelResult {
  std::vector<CandidateEntry> candidates;  // union of the lists, sorted, unique
  std::vector<PeelPath> paths;             // sorted by residual
  LearnerDiagnostics diagnostics;
};

namespace detail {

inline std::vector<std::uint16_t> distances_to(const Permutation& center) {
  const int n = center.n();
  const auto cpos = center.positions();
  std::vector<std::uint16_t> out;
  out.reserve(factorial(n));
  for_each_permutation(n, [&](const std::vector<int>& r) {
    int d = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (cpos[r[i] - 1] > cpos[r[j] - 1]) ++d;
    out.push_back(static_cast<std::uint16_t>(d));
  });
  return out;
}

inline PermMeasure from_dense(int n, const std::vector<double>& values) {
  PermMeasure m(n);
  std::size_t i = 0;
  for_each_permutation(n, [&](const std::vector<int>& r) {
    if (values[i] != 0.0) m.add(r.data(), values[i]);
    ++i;
  });
  return m;
}

// Last component: the pairwise-majority order of the residual, the residual
// mass as weight, and every grid value of phi.
inline void peel_last(const std::vector<double>& dense, const PermMeasure& u,
                      std::vector<CandidateEntry> prefix, const std::vector<double>& grid,
                      double alpha, std::vector<PeelPath>& paths,
                      std::vector<CandidateEntry>& seen, LearnerDiagnostics& dg) {
  const int n = u.n();
  SamePhiResult res;
  try {
    res = learn_single_same_phi(u, 0.5, SamePhiGuess{});
  } catch (const recovery_failure&) {
    ++dg.recovery_failures;
    return;
  }
  dg.ties += res.ties;
  const double w = u.mass();
  if (res.centers.empty() || !(w > 0.0)) return;
  const Permutation& pi = res.centers.front();
  for (double phi : grid)
    if (w >= alpha / 2.0 && w <= 1.25) seen.push_back({w, phi, pi});
  const auto dist = distances_to(pi);
  double best = 1e300;
  int best_t = -1;
  for (int t = 0; t < static_cast<int>(grid.size()); ++t) {
    const auto dw = distance_weights(n, grid[t]);
    double l1 = 0.0;
    for (std::size_t j = 0; j < dense.size(); ++j) l1 += std::abs(dense[j] - w * dw[dist[j]]);
    if (l1 < best) best = l1, best_t = t;
  }
  prefix.push_back({w, grid[best_t], pi});
  paths.push_back({std::move(prefix), best});
}

inline void peel_rec(const PermMeasure& v, int k, const std::vector<CandidateEntry>& prefix,
                     const LearnerBudget& b, const std::vector<double>& grid,
                     std::vector<PeelPath>& paths, std::vector<CandidateEntry>& seen,
                     LearnerDiagnostics& dg) {
  const int n = v.n();
  const auto dense = v.to_vector().values;
  if (k == 1) {
    peel_last(dense, v, prefix, grid, b.alpha, paths, seen, dg);
    return;
  }
  const auto level = learn_single_general_scored(v, k, b);
  dg.merge(level.diagnostics);
  for (const auto& c : level.entries) {
    seen.push_back(c);
    const auto dist = distances_to(c.center);
    const auto dw = distance_weights(n, c.phi);
    std::vector<double> residual = dense;
    for (std::size_t j = 0; j < residual.size(); ++j) residual[j] -= c.weight * dw[dist[j]];
    auto next = prefix;
    next.push_back(c);
    peel_rec(from_dense(n, residual), k - 1, next, b, grid, paths, seen, dg);
  }
}

}  // namespace detail

// Learns a component, subtracts it, and repeats on the residual; every chain
// of k such steps is a path. Needs n within the enumeration cutoff.
inline PeelResult peel_components(const PermMeasure& v, int k, const LearnerBudget& b) {
  PeelResult out;
  if (k < 1 || v.size() == 0) return out;
  require_enumerable(v.n());
  const auto grid = phi_grid(b);
  detail::peel_rec(v, k, {}, b, grid, out.paths, out.candidates, out.diagnostics);
  std::sort(out.candidates.begin(), out.candidates.end());
  out.candidates.erase(std::unique(out.candidates.begin(), out.candidates.end(),
                                   [](const auto& a, const auto& c) {
                                     return a.center == c.center && a.phi == c.phi && a.weight == c.weight;
                                   }),
                       out.candidates.end());
  std::stable_sort(out.paths.begin(), out.paths.end(),
                   [](const auto& a, const auto& c) { return a.residual_l1 < c.residual_l1; });
  return out;
}

// ---------------------------------------------------------------------------
// Testing

struct CloseTest {
  bool accept = false;
  double statistic = 0.0;       // L1 distance of the order-c moment vectors
  double threshold = 0.0;
  double log10_formula_threshold = 0.0;
  int order = 0;
};

// Noise floor of the statistic: exact backing only has rounding; sampled
// backing has about sqrt(N * C(n,c) / m) expected L1 error per side.
inline CloseTest test_componentwise_close(const PlacementOracle& data, const MallowsMixture& cand,
                                          const LearnerBudget& b, std::uint64_t trial = 0) {
  const int n = data.n();
  if (cand.n() != n) throw std::invalid_argument("candidate and data disagree on n");
  const int k = cand.k();
  CloseTest t;
  t.order = b.order(n, k);
  const int c = t.order;
  const bool sampled = data.backing() == PlacementOracle::Backing::empirical;
  PermMeasure other = sampled
      ? PermMeasure::empirical(sample_mixture(cand, data.sample_count(),
                                              derive_seed(b.seed, "tester", trial), b.workers).perms)
      : PermMeasure::exact(cand);
  if (c == n) {
    const auto a = data.measure().to_vector().values;
    const auto o = other.to_vector().values;
    for (std::size_t i = 0; i < a.size(); ++i) t.statistic += std::abs(a[i] - o[i]);
  } else {
    const auto a = moment_vector(data.measure(), c);
    const auto o = moment_vector(other, c);
    for (const auto& [q, val] : a) t.statistic += std::abs(val - o.at(q));
  }
  const double eps = b.eps(n);
  const double log_base = std::log10(eps * b.theta * b.alpha / (static_cast<double>(n) * k));
  t.log10_formula_threshold = std::log10(2.0) + std::pow(10.0 * k, 8.0 * k) * log_base;
  double floor = 1e-8;
  if (sampled) {
    const double entries = static_cast<double>(moment_entry_count(n, c));
    floor = 2.0 * std::sqrt(entries * static_cast<double>(binomial(n, c)) /
                            static_cast<double>(data.sample_count()));
  }
  t.threshold = std::max(std::pow(10.0, t.log10_formula_threshold), floor);
  t.accept = t.statistic <= t.threshold;
  return t;
}

// ---------------------------------------------------------------------------
// Full pipeline

struct TupleReport {
  MallowsMixture mixture;
  double path_residual = 0.0;   // before refinement
  double fit_residual = 0.0;    // L1 after refinement
  std::string eliminated;       // empty when tested
  CloseTest test;
};

struct GeneralResult {
  MallowsMixture mixture;
  double statistic = 0.0;
  double threshold = 0.0;
  double residual_l1 = 0.0;  // data minus every recovered component
  std::size_t candidate_count = 0;
  std::size_t path_count = 0;
  std::vector<Permutation> small_phi_list;
  std::vector<TupleReport> tuples;
  LearnerDiagnostics diagnostics;
};

namespace detail {

inline std::string degenerate_reason(const MallowsMixture& m, const LearnerBudget& b) {
  const double eps = b.eps(m.n());
  for (int i = 0; i < m.k(); ++i) {
    if (m.components[i].phi > 1.0 - eps / 2.0) return "phi above 1 - eps/2";
    if (m.weights[i] < b.alpha / 2.0) return "weight below alpha/2";
    for (int j = 0; j < i; ++j)
      if (m.components[i].center == m.components[j].center &&
          std::abs(m.components[i].phi - m.components[j].phi) <= eps / 10.0)
        return "repeated centre with phi within eps/10";
  }
  return "";
}

inline double dense_residual(const std::vector<double>& dense, const MallowsMixture& m) {
  const auto mv = vectorize(m).values;
  double s = 0.0;
  for (std::size_t i = 0; i < dense.size(); ++i) s += std::abs(dense[i] - mv[i]);
  return s;
}

}  // namespace detail

// small-phi removal -> peeling -> tuples -> elimination -> testing; returns
// the accepted tuple with the smallest statistic.
inline GeneralResult learn_mixture_general(const PlacementOracle& data, int k, const LearnerBudget& b) {
  const PermMeasure& v = data.measure();
  const int n = v.n();
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  require_enumerable(n);
  GeneralResult out;
  const auto dense = v.to_vector().values;
  const auto grid = phi_grid(b);

  out.small_phi_list = small_phi_candidates(v, b.alpha);
  std::vector<PeelPath> paths;
  std::vector<CandidateEntry> seen;
  {
    auto full = peel_components(v, k, b);
    out.diagnostics.merge(full.diagnostics);
    paths = std::move(full.paths);
    seen = std::move(full.candidates);
  }
  // guessed subsets of small-phi centres, with a coarse weight grid and
  // phi in {0, 1/(4n)}
  const std::vector<double> small_phis{0.0, 1.0 / (4.0 * n)};
  std::vector<double> small_ws;
  for (double w = b.small_weight_step; w <= 1.0 + 1e-12; w += b.small_weight_step) small_ws.push_back(std::min(w, 1.0));
  const int list = static_cast<int>(out.small_phi_list.size());
  std::size_t subsets = 0;
  for (int mask = 1; mask < (1 << list) && subsets < b.max_small_subsets; ++mask) {
    std::vector<int> members;
    for (int i = 0; i < list; ++i)
      if (mask >> i & 1) members.push_back(i);
    if (static_cast<int>(members.size()) > k) continue;
    ++subsets;
    const std::size_t options = small_ws.size() * small_phis.size();
    std::size_t total = 1;
    for (std::size_t i = 0; i < members.size(); ++i) total *= options;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<CandidateEntry> guesses;
      std::size_t rest = code;
      double wsum = 0.0;
      for (int idx : members) {
        const std::size_t o = rest % options;
        rest /= options;
        guesses.push_back({small_ws[o / small_phis.size()], small_phis[o % small_phis.size()],
                           out.small_phi_list[idx]});
        wsum += guesses.back().weight;
      }
      if (wsum > 1.0 + 1e-9) continue;
      const PermMeasure residual = remove_small_phi(v, guesses);
      if (static_cast<int>(guesses.size()) == k) {
        paths.push_back({guesses, residual.l1_norm()});
        continue;
      }
      auto sub = peel_components(residual, k - static_cast<int>(guesses.size()), b);
      out.diagnostics.merge(sub.diagnostics);
      for (auto& p : sub.paths) {
        auto comps = guesses;
        comps.insert(comps.end(), p.components.begin(), p.components.end());
        paths.push_back({std::move(comps), p.residual_l1});
      }
      seen.insert(seen.end(), sub.candidates.begin(), sub.candidates.end());
    }
  }
  std::stable_sort(paths.begin(), paths.end(),
                   [](const auto& a, const auto& c) { return a.residual_l1 < c.residual_l1; });
  out.path_count = paths.size();
  std::sort(seen.begin(), seen.end());
  out.candidate_count = seen.size();

  // distinct centre multisets, best residual first
  std::set<std::vector<std::uint64_t>> used;
  double best_gap = std::numeric_limits<double>::infinity();
  int best = -1;
  for (const auto& p : paths) {
    if (out.tuples.size() >= b.max_paths) break;
    std::vector<std::uint64_t> key;
    for (const auto& c : p.components) key.push_back(lex_rank(c.center));
    std::sort(key.begin(), key.end());
    if (!used.insert(key).second) continue;
    std::vector<MallowsModel> comps;
    std::vector<double> w, phi;
    std::vector<Permutation> centers;
    double wsum = 0.0;
    for (const auto& c : p.components) wsum += std::max(c.weight, 0.0);
    for (const auto& c : p.components) {
      centers.push_back(c.center);
      w.push_back(wsum > 0.0 ? std::max(c.weight, 0.0) / wsum : 1.0 / k);
      phi.push_back(std::clamp(c.phi, 0.0, 1.0));
    }
    TupleReport rep;
    rep.path_residual = p.residual_l1;
    if (b.refine) {
      const auto fit = fit_mixture_parameters(dense, centers, w, phi);
      w = fit.weights;
      phi = fit.phis;
    }
    for (int i = 0; i < k; ++i) comps.emplace_back(std::clamp(phi[i], 0.0, 1.0), centers[i]);
    double s = 0.0;
    for (double x : w) s += x;
    for (double& x : w) x /= s;
    rep.mixture = MallowsMixture(comps, w);
    rep.fit_residual = detail::dense_residual(dense, rep.mixture);
    rep.eliminated = detail::degenerate_reason(rep.mixture, b);
    if (rep.eliminated.empty()) {
      rep.test = test_componentwise_close(data, rep.mixture, b, out.tuples.size());
      best_gap = std::min(best_gap, rep.test.statistic);
      if (rep.test.accept &&
          (best < 0 || rep.test.statistic < out.tuples[best].test.statistic))
        best = static_cast<int>(out.tuples.size());
    }
    out.tuples.push_back(std::move(rep));
  }
  if (best < 0)
    throw learning_failure("no candidate mixture was accepted", out.tuples.size(), best_gap);
  const auto& chosen = out.tuples[best];
  out.mixture = chosen.mixture;
  out.statistic = chosen.test.statistic;
  out.threshold = chosen.test.threshold;
  out.residual_l1 = chosen.fit_residual;
  return out;
}

}  // namespace mallows
