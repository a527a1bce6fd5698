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

#include <functional>
#include <map>
#include <set>
#include <unordered_map>

#include "mallows/local_query.hpp"
#include "mallows/refine.hpp"
#include "mallows/structures.hpp"

namespace mallows {

struct SeparationParams {
  double gamma = 0.2;   // pairwise phi gap and distance of every phi from 1
  double alpha = 0.1;   // weight floor
  double theta = 0.02;  // target accuracy, at most gamma/10 for the tester
  double beta = 0.05;   // phi grid step; grid points sit at (j + 1/2) beta
  double delta = 0.05;  // failure probability
  int prefix_len = 0;   // 0 selects min(10k, n/2)
  std::size_t max_centers = 400;
  std::size_t max_tests = 64;
  bool refine = true;
  int workers = 1;
  std::uint64_t seed = 0;

  int prefix_length(int n, int k) const {
    return prefix_len > 0 ? prefix_len : std::min(10 * k, n / 2);
  }
};

inline std::vector<double> midpoint_grid(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("grid step must lie in (0,1)");
  std::vector<double> g;
  for (int j = 0; (j + 0.5) * beta < 1.0; ++j) g.push_back((j + 0.5) * beta);
  return g;
}

// ---------------------------------------------------------------------------
// Prefix probabilities

class PrefixOracle {
 public:
  virtual ~PrefixOracle() = default;
  virtual int n() const = 0;
  // Probability that a draw starts with seq, in order.
  virtual double prefix_mass(const std::vector<int>& seq) = 0;
};

// Counts every prefix of length <= max_len of a (signed) measure once.
class MeasurePrefixOracle : public PrefixOracle {
 public:
  MeasurePrefixOracle(const PermMeasure& m, int max_len) : n_(m.n()), max_len_(max_len) {
    if (max_len < 0 || max_len > m.n()) throw std::invalid_argument("prefix length out of range");
    for (std::size_t a = 0; a < m.size(); ++a) {
      const auto* r = m.ranking(a);
      std::uint64_t key = 0;
      for (int t = 0; t < max_len; ++t) {
        key = key * static_cast<std::uint64_t>(n_ + 1) + r[t];
        counts_[key_with_len(key, t + 1)] += m.weight(a);
      }
    }
    total_ = m.mass();
  }
  int n() const override { return n_; }
  double prefix_mass(const std::vector<int>& seq) override {
    if (seq.empty()) return total_;
    if (static_cast<int>(seq.size()) > max_len_) throw std::invalid_argument("prefix longer than indexed");
    std::uint64_t key = 0;
    for (int e : seq) key = key * static_cast<std::uint64_t>(n_ + 1) + static_cast<std::uint64_t>(e);
    const auto it = counts_.find(key_with_len(key, static_cast<int>(seq.size())));
    return it == counts_.end() ? 0.0 : it->second;
  }

 private:
  static std::uint64_t key_with_len(std::uint64_t key, int len) { return key * 32 + static_cast<std::uint64_t>(len); }
  int n_, max_len_;
  double total_ = 0.0;
  std::unordered_map<std::uint64_t, double> counts_;
};

// Prefix probabilities through charged local queries {(s_1,1), ..., (s_t,t)}.
class LocalPrefixOracle : public PrefixOracle {
 public:
  LocalPrefixOracle(LocalQueryOracle& oracle, double tau) : oracle_(oracle), tau_(tau) {}
  int n() const override { return oracle_.n(); }
  double prefix_mass(const std::vector<int>& seq) override {
    if (seq.empty()) return 1.0;
    LocalQuery q{{}, tau_};
    for (std::size_t t = 0; t < seq.size(); ++t) q.query.assignments.emplace_back(seq[t], static_cast<int>(t) + 1);
    return oracle_.query(q);
  }

 private:
  LocalQueryOracle& oracle_;
  double tau_;
};

struct PrefixCandidate {
  std::vector<int> prefix;
  double phi_estimate = 0.0;
};

struct PrefixSearch {
  std::vector<std::vector<int>> prefixes;  // heavy prefixes, heaviest first
  std::vector<double> masses;
  double threshold = 0.0;
  double log10_claimed_list_size = 0.0;  // reporting only
};

// Grows prefixes one element at a time, keeping those with mass at least
// gamma^len * alpha / 2.
inline PrefixSearch find_prefix_sequences(PrefixOracle& oracle, int k, const SeparationParams& p) {
  const int n = oracle.n();
  const int len = p.prefix_length(n, k);
  if (len > n) throw std::invalid_argument("prefix length exceeds n");
  if (len < 0) throw std::invalid_argument("prefix length must be non-negative");
  PrefixSearch out;
  out.threshold = 0.5 * std::pow(p.gamma, len) * p.alpha;
  out.log10_claimed_list_size = k * std::log10(2.0) - 10.0 * k * k * std::log10(p.gamma) -
                                k * std::log10(p.alpha * p.beta);
  std::vector<std::vector<int>> level{{}};
  std::vector<double> mass{1.0};
  for (int t = 0; t < len; ++t) {
    std::vector<std::vector<int>> next;
    std::vector<double> next_mass;
    for (const auto& pre : level) {
      std::vector<char> used(n + 1, 0);
      for (int e : pre) used[e] = 1;
      for (int e = 1; e <= n; ++e) {
        if (used[e]) continue;
        auto cand = pre;
        cand.push_back(e);
        const double m = oracle.prefix_mass(cand);
        if (m >= out.threshold) {
          next.push_back(std::move(cand));
          next_mass.push_back(m);
        }
      }
    }
    level.swap(next);
    mass.swap(next_mass);
  }
  std::vector<std::size_t> order(level.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mass[a] > mass[b]; });
  for (auto i : order) {
    out.prefixes.push_back(level[i]);
    out.masses.push_back(mass[i]);
  }
  return out;
}

// Every heavy prefix paired with every grid value of phi.
inline std::vector<PrefixCandidate> find_prefixes(PrefixOracle& oracle, int k, const SeparationParams& p) {
  const auto search = find_prefix_sequences(oracle, k, p);
  std::vector<PrefixCandidate> out;
  for (const auto& pre : search.prefixes)
    for (double phi : midpoint_grid(p.beta)) out.push_back({pre, phi});
  return out;
}

inline std::vector<PrefixCandidate> find_prefixes(const std::vector<Permutation>& samples, int k,
                                                  const SeparationParams& p) {
  if (samples.empty()) return {};
  MeasurePrefixOracle o(PermMeasure::empirical(samples), p.prefix_length(samples.front().n(), k));
  return find_prefixes(o, k, p);
}

// ---------------------------------------------------------------------------
// Extending a prefix

// Statistics over the event that a draw starts with the head pairs, each pair
// either way round. Flip pattern f has bit a set when pair a is reversed.
struct HeadTable {
  int n = 0;
  std::vector<int> head;
  std::vector<double> mass;                  // per flip pattern
  std::vector<std::vector<double>> before;   // [f][x*(n+1)+y]: also x ahead of y

  double at(std::size_t f, int x, int y) const { return before[f][x * (n + 1) + y]; }
  std::vector<int> outside() const {
    std::vector<char> in(n + 1, 0);
    for (int e : head) in[e] = 1;
    std::vector<int> out;
    for (int e = 1; e <= n; ++e)
      if (!in[e]) out.push_back(e);
    return out;
  }
};

namespace detail {

inline int head_flip(const std::vector<int>& head, const std::uint8_t* pos) {
  int f = 0;
  const int pairs = static_cast<int>(head.size()) / 2;
  for (int a = 0; a < pairs; ++a) {
    const int p = pos[head[2 * a] - 1], q = pos[head[2 * a + 1] - 1];
    if (std::min(p, q) != 2 * a || std::max(p, q) != 2 * a + 1) return -1;
    if (p > q) f |= 1 << a;
  }
  return f;
}

inline std::vector<int> flipped_head(const std::vector<int>& head, int f) {
  auto seq = head;
  for (std::size_t a = 0; 2 * a + 1 < head.size(); ++a)
    if (f >> a & 1) std::swap(seq[2 * a], seq[2 * a + 1]);
  return seq;
}

}  // namespace detail

inline HeadTable head_table(const PermMeasure& v, const std::vector<int>& head, bool with_pairs = true) {
  if (head.size() % 2 != 0) throw std::invalid_argument("head must consist of pairs");
  HeadTable t;
  t.n = v.n();
  t.head = head;
  const std::size_t patterns = std::size_t{1} << (head.size() / 2);
  t.mass.assign(patterns, 0.0);
  if (with_pairs) t.before.assign(patterns, std::vector<double>((t.n + 1) * (t.n + 1), 0.0));
  const auto out = t.outside();
  for (std::size_t a = 0; a < v.size(); ++a) {
    const auto* pos = v.positions(a);
    const int f = detail::head_flip(head, pos);
    if (f < 0) continue;
    const double w = v.weight(a);
    t.mass[f] += w;
    if (!with_pairs) continue;
    const auto* r = v.ranking(a);
    auto& b = t.before[f];
    for (int i = static_cast<int>(head.size()); i < t.n; ++i)
      for (int j = i + 1; j < t.n; ++j) b[r[i] * (t.n + 1) + r[j]] += w;
  }
  return t;
}

// Contrast tensor Z = z_1 (x) ... (x) z_{k-1}: z_a annihilates the pair
// marginal of competitor a, whose scaling is phis[a] and whose order of the
// pair agrees with the head when same[a] holds.
inline std::vector<double> contrast_tensor(const std::vector<double>& phis, const std::vector<char>& same) {
  std::vector<double> z{1.0};
  for (std::size_t a = 0; a < phis.size(); ++a) {
    const auto tv = pair_test_vector(phis[a], same[a] != 0).values;
    std::vector<double> next(z.size() * 2);
    for (std::size_t f = 0; f < z.size(); ++f) {
      next[f] = z[f] * tv[0];
      next[f + z.size()] = z[f] * tv[1];
    }
    z.swap(next);
  }
  return z;
}

struct PairContrast {
  double x_first = 0.0;  // <Z, T_x>
  double y_first = 0.0;  // <Z, T_y>
};

inline PairContrast pair_contrast(const HeadTable& t, const std::vector<double>& z, int x, int y) {
  PairContrast c;
  for (std::size_t f = 0; f < z.size(); ++f) {
    c.x_first += z[f] * t.at(f, x, y);
    c.y_first += z[f] * t.at(f, y, x);
  }
  return c;
}

struct ExtensionOutcome {
  Permutation center;
  std::size_t ties = 0;
};

// Centre hypothesis: the head, then the outside elements ordered by the
// larger of |<Z,T_x>| and |<Z,T_y>| for every pair.
inline ExtensionOutcome extend_with_contrast(const HeadTable& t, const std::vector<double>& z) {
  const int n = t.n;
  const auto out = t.outside();
  std::vector<std::vector<char>> prec(n + 1, std::vector<char>(n + 1, 0));
  std::vector<int> wins(n + 1, 0);
  ExtensionOutcome res;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = i + 1; j < out.size(); ++j) {
      const int x = out[i], y = out[j];
      const auto c = pair_contrast(t, z, x, y);
      const double ax = std::abs(c.x_first), ay = std::abs(c.y_first);
      bool x_first = ax > ay;
      if (ax == ay) {
        ++res.ties;
        x_first = x < y;
      }
      prec[x][y] = x_first;
      prec[y][x] = !x_first;
      ++wins[x_first ? x : y];
    }
  auto order = out;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return wins[a] > wins[b]; });
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j)
      if (!prec[order[i]][order[j]]) {
        const auto tri = detail::find_cycle(out, prec);
        throw recovery_failure("pairwise orders are not transitive", tri[0], tri[1], tri[2]);
      }
  Ranking r = t.head;
  r.insert(r.end(), order.begin(), order.end());
  res.center = Permutation(std::move(r));
  return res;
}

// For each component: 2^{k-1} centre hypotheses, one per guess of how each
// competitor orders its pair of the component's head.
inline std::vector<std::vector<Permutation>> extend_prefix(const PermMeasure& v,
                                                           const std::vector<std::vector<int>>& prefixes,
                                                           const std::vector<double>& phis, int k) {
  if (static_cast<int>(prefixes.size()) != k || static_cast<int>(phis.size()) != k)
    throw std::invalid_argument("need one prefix and one phi per component");
  const int hl = 2 * (k - 1);
  if (v.n() < hl + 2) throw std::invalid_argument("n too small for the head pairs");
  std::vector<std::vector<Permutation>> out(k);
  for (int i = 0; i < k; ++i) {
    if (static_cast<int>(prefixes[i].size()) < hl) throw std::invalid_argument("prefix shorter than 2k-2");
    const std::vector<int> head(prefixes[i].begin(), prefixes[i].begin() + hl);
    const auto t = head_table(v, head);
    std::vector<double> others;
    for (int j = 0; j < k; ++j)
      if (j != i) others.push_back(phis[j]);
    for (int mask = 0; mask < (1 << (k - 1)); ++mask) {
      std::vector<char> same(k - 1);
      for (int a = 0; a < k - 1; ++a) same[a] = !(mask >> a & 1);
      out[i].push_back(extend_with_contrast(t, contrast_tensor(others, same)).center);
    }
  }
  return out;
}

inline std::vector<std::vector<Permutation>> extend_prefix(const PlacementOracle& o,
                                                           const std::vector<std::vector<int>>& prefixes,
                                                           const std::vector<double>& phis, int k) {
  return extend_prefix(o.measure(), prefixes, phis, k);
}

// ---------------------------------------------------------------------------
// Weights

struct WeightEstimate {
  std::vector<double> raw;
  std::vector<double> weights;  // clipped to [0,1] and renormalised
};

namespace detail {

inline std::vector<double> head_model_tensor(double phi, const Permutation& center, const std::vector<int>& head) {
  const std::size_t patterns = std::size_t{1} << (head.size() / 2);
  std::vector<double> out(patterns);
  for (std::size_t f = 0; f < patterns; ++f)
    out[f] = prefix_prob(phi, center, flipped_head(head, static_cast<int>(f)));
  return out;
}

inline std::vector<char> head_orientations(const std::vector<int>& head, const Permutation& other) {
  const auto pos = other.positions();
  std::vector<char> same;
  for (std::size_t a = 0; 2 * a + 1 < head.size(); ++a)
    same.push_back(pos[head[2 * a] - 1] < pos[head[2 * a + 1] - 1]);
  return same;
}

constexpr double kContrastFloor = 1e-14;

// w_i = <T', Z'> / <T'_i, Z'> given the head masses of component i.
inline double weight_ratio(const std::vector<double>& head_mass, const std::vector<MallowsModel>& comps, int i) {
  const int k = static_cast<int>(comps.size());
  const auto& c = comps[i].center;
  const std::vector<int> head(c.ranking().begin(), c.ranking().begin() + 2 * (k - 1));
  std::vector<double> phis;
  std::vector<char> same;
  for (int j = 0, a = 0; j < k; ++j) {
    if (j == i) continue;
    phis.push_back(comps[j].phi);
    const auto pos = comps[j].center.positions();
    same.push_back(pos[head[2 * a] - 1] < pos[head[2 * a + 1] - 1]);
    ++a;
  }
  const auto z = contrast_tensor(phis, same);
  const auto model = head_model_tensor(comps[i].phi, c, head);
  double num = 0.0, den = 0.0;
  for (std::size_t f = 0; f < z.size(); ++f) {
    num += z[f] * head_mass[f];
    den += z[f] * model[f];
  }
  if (!(std::abs(den) > kContrastFloor)) throw degenerate_input_error("contrast of the component vanishes");
  return num / den;
}

inline WeightEstimate normalise_weights(std::vector<double> raw) {
  WeightEstimate w;
  w.raw = raw;
  double s = 0.0;
  for (double& x : raw) {
    x = std::clamp(x, 0.0, 1.0);
    s += x;
  }
  if (!(s > 0.0)) throw degenerate_input_error("every weight estimate is non-positive");
  for (double& x : raw) x /= s;
  w.weights = std::move(raw);
  return w;
}

}  // namespace detail

inline WeightEstimate estimate_weights(const PermMeasure& v, const std::vector<Permutation>& centers,
                                       const std::vector<double>& phis) {
  const int k = static_cast<int>(centers.size());
  if (k < 1 || static_cast<int>(phis.size()) != k) throw std::invalid_argument("need one phi per centre");
  if (v.n() < 2 * (k - 1)) throw std::invalid_argument("n too small for the head pairs");
  std::vector<MallowsModel> comps;
  for (int i = 0; i < k; ++i) comps.emplace_back(phis[i], centers[i]);
  std::vector<double> raw(k);
  for (int i = 0; i < k; ++i) {
    const std::vector<int> head(centers[i].ranking().begin(), centers[i].ranking().begin() + 2 * (k - 1));
    raw[i] = detail::weight_ratio(head_table(v, head, false).mass, comps, i);
  }
  return detail::normalise_weights(std::move(raw));
}

inline WeightEstimate estimate_weights(const PlacementOracle& o, const std::vector<Permutation>& centers,
                                       const std::vector<double>& phis) {
  return estimate_weights(o.measure(), centers, phis);
}

// ---------------------------------------------------------------------------
// Testing

struct SeparatedTest {
  bool accept = true;
  double order_gap = 0.0;        // largest ||T_x - T'_x||_1 over heads and pairs
  double order_threshold = 0.0;
  double phi_gap = 0.0;          // largest ||T - T'||_1 over the longer heads
  double phi_threshold = 0.0;
  double log10_order_formula = 0.0;
  double log10_phi_formula = 0.0;
  std::string reason;            // which check rejected
};

namespace detail {

inline PermMeasure reversed_measure(const PermMeasure& v) {
  PermMeasure out(v.n());
  out.reserve(v.size());
  std::vector<std::uint8_t> r(v.n());
  for (std::size_t a = 0; a < v.size(); ++a) {
    const auto* src = v.ranking(a);
    for (int i = 0; i < v.n(); ++i) r[i] = src[v.n() - 1 - i];
    out.add(r.data(), v.weight(a));
  }
  return out;
}

// Bernstein allowance for an L1 sum of empirical masses, union bounded over
// `tests` checks.
inline double mass_allowance(const std::vector<double>& p, std::size_t m, double delta, std::size_t tests) {
  if (m == 0) return 1e-9;
  const double l = std::log(2.0 * static_cast<double>(tests) * static_cast<double>(p.size()) / delta);
  double s = 0.0;
  for (double x : p) s += std::sqrt(2.0 * std::max(x, 0.0) * l / static_cast<double>(m)) + 2.0 * l / (3.0 * m);
  return s;
}

}  // namespace detail

// Both directions: the candidate's own heads on the data, and the same on
// reversed rankings (mirrored pass).
inline SeparatedTest test_separated_close(const PlacementOracle& data, const MallowsMixture& cand,
                                          const SeparationParams& p) {
  const int n = data.n();
  const int k = cand.k();
  if (cand.n() != n) throw std::invalid_argument("candidate and data disagree on n");
  SeparatedTest res;
  const double scale = std::log10(p.gamma / 8.0) * 6.0 * k;
  res.log10_order_formula = std::log10(p.alpha / 3.0) + scale;
  res.log10_phi_formula = std::log10(0.5 * p.alpha * p.theta) + scale;
  const std::size_t m = data.backing() == PlacementOracle::Backing::empirical ? data.sample_count() : 0;
  const int h1 = std::max(0, std::min(4 * k - 4, n - 2)) / 2 * 2;
  const int h2 = std::min(4 * k - 2, n) / 2 * 2;
  const std::size_t tests = static_cast<std::size_t>(2 * k) * (n * n + 1);
  const PermMeasure mirrored = detail::reversed_measure(data.measure());

  for (int pass = 0; pass < 2; ++pass) {
    const PermMeasure& v = pass == 0 ? data.measure() : mirrored;
    std::vector<MallowsModel> comps;
    for (const auto& c : cand.components) comps.emplace_back(c.phi, pass == 0 ? c.center : c.center.reversed());
    for (int i = 0; i < k; ++i) {
      const auto& r = comps[i].center.ranking();
      // order check on the first h1 elements
      {
        const std::vector<int> head(r.begin(), r.begin() + h1);
        const auto t = head_table(v, head);
        const auto out = t.outside();
        const std::size_t patterns = t.mass.size();
        std::vector<std::vector<double>> pre(k);
        std::vector<std::vector<int>> xpos(k, std::vector<int>(n + 1, -1));
        for (int j = 0; j < k; ++j) {
          pre[j] = detail::head_model_tensor(comps[j].phi, comps[j].center, head);
          int idx = 0;
          for (int e : comps[j].center.ranking())
            if (std::find(head.begin(), head.end(), e) == head.end()) xpos[j][e] = idx++;
        }
        for (std::size_t a = 0; a < out.size(); ++a)
          for (std::size_t b = a + 1; b < out.size(); ++b) {
            const int x = out[a], y = out[b];
            std::vector<double> dx(patterns), dy(patterns), mx(patterns, 0.0), my(patterns, 0.0);
            for (int j = 0; j < k; ++j) {
              const int d = xpos[j][y] - xpos[j][x];
              const double q = pair_order_prob(comps[j].phi, std::abs(d) + 1);
              const double px = d > 0 ? q : 1.0 - q;
              for (std::size_t f = 0; f < patterns; ++f) {
                mx[f] += cand.weights[j] * pre[j][f] * px;
                my[f] += cand.weights[j] * pre[j][f] * (1.0 - px);
              }
            }
            double gx = 0.0, gy = 0.0;
            for (std::size_t f = 0; f < patterns; ++f) {
              dx[f] = t.at(f, x, y);
              dy[f] = t.at(f, y, x);
              gx += std::abs(dx[f] - mx[f]);
              gy += std::abs(dy[f] - my[f]);
            }
            std::vector<double> ref(patterns);
            for (std::size_t f = 0; f < patterns; ++f) ref[f] = std::max(dx[f], mx[f]);
            const double allow_x = detail::mass_allowance(ref, m, p.delta, tests);
            for (std::size_t f = 0; f < patterns; ++f) ref[f] = std::max(dy[f], my[f]);
            const double allow_y = detail::mass_allowance(ref, m, p.delta, tests);
            const double floor = std::pow(10.0, res.log10_order_formula);
            const double over = std::max(gx - std::max(floor, allow_x), gy - std::max(floor, allow_y));
            if (std::max(gx, gy) > res.order_gap) {
              res.order_gap = std::max(gx, gy);
              res.order_threshold = std::max(floor, std::max(allow_x, allow_y));
            }
            if (over > 0.0 && res.accept) {
              res.accept = false;
              res.reason = "pair order (" + std::to_string(x) + "," + std::to_string(y) + ") of component " +
                           std::to_string(i) + (pass ? ", mirrored" : "");
            }
          }
      }
      // scaling check on the first h2 elements
      {
        const std::vector<int> head(r.begin(), r.begin() + h2);
        const auto t = head_table(v, head, false);
        std::vector<double> model(t.mass.size(), 0.0);
        for (int j = 0; j < k; ++j) {
          const auto pre = detail::head_model_tensor(comps[j].phi, comps[j].center, head);
          for (std::size_t f = 0; f < model.size(); ++f) model[f] += cand.weights[j] * pre[f];
        }
        double g = 0.0;
        std::vector<double> ref(model.size());
        for (std::size_t f = 0; f < model.size(); ++f) {
          g += std::abs(t.mass[f] - model[f]);
          ref[f] = std::max(t.mass[f], model[f]);
        }
        const double thr = std::max(std::pow(10.0, res.log10_phi_formula),
                                    detail::mass_allowance(ref, m, p.delta, tests));
        if (g > res.phi_gap) {
          res.phi_gap = g;
          res.phi_threshold = thr;
        }
        if (g > thr && res.accept) {
          res.accept = false;
          res.reason = "head mass of component " + std::to_string(i) + (pass ? ", mirrored" : "");
        }
      }
    }
  }
  if (res.order_threshold == 0.0) res.order_threshold = std::pow(10.0, res.log10_order_formula);
  if (res.phi_threshold == 0.0) res.phi_threshold = std::pow(10.0, res.log10_phi_formula);
  return res;
}

// ---------------------------------------------------------------------------
// Full pipeline

struct SeparatedCandidate {
  MallowsMixture mixture;
  std::vector<double> raw_weights;
  double score = 0.0;  // L1 misfit of first-place and pairwise-order frequencies
  SeparatedTest test;
  bool tested = false;
};

struct SeparatedResult {
  MallowsMixture mixture;
  std::vector<double> raw_weights;
  SeparatedTest test;
  std::size_t prefix_count = 0;
  std::size_t head_count = 0;
  std::size_t center_count = 0;
  std::size_t tuple_count = 0;
  std::size_t recovery_failures = 0;
  std::vector<SeparatedCandidate> tested;
};

namespace detail {

// First-place frequencies (n) then x-ahead-of-y frequencies for x < y.
inline std::vector<double> low_order_stats(const PermMeasure& v) {
  const int n = v.n();
  std::vector<double> s(n + n * (n - 1) / 2, 0.0);
  std::vector<int> base(n + 1, 0);
  for (int x = 1, idx = n; x <= n; ++x) {
    base[x] = idx - (x + 1);  // index of (x, y) is base[x] + y
    idx += n - x;
  }
  for (std::size_t a = 0; a < v.size(); ++a) {
    const auto* r = v.ranking(a);
    const auto* pos = v.positions(a);
    const double w = v.weight(a);
    s[r[0] - 1] += w;
    for (int x = 1; x <= n; ++x)
      for (int y = x + 1; y <= n; ++y)
        if (pos[x - 1] < pos[y - 1]) s[base[x] + y] += w;
  }
  return s;
}

inline std::vector<double> model_low_order_stats(double phi, const Permutation& c) {
  const int n = c.n();
  std::vector<double> s(n + n * (n - 1) / 2, 0.0);
  const double z = geometric_sum(n, phi);
  double pw = 1.0;
  for (int j = 0; j < n; ++j) {
    s[c[j] - 1] = pw / z;
    pw *= phi;
  }
  const auto pos = c.positions();
  std::vector<double> pop(n + 1, 1.0);
  for (int d = 2; d <= n; ++d) pop[d] = pair_order_prob(phi, d);
  int idx = n;
  for (int x = 1; x <= n; ++x)
    for (int y = x + 1; y <= n; ++y) {
      const int d = pos[y - 1] - pos[x - 1];
      s[idx++] = d > 0 ? pop[d + 1] : 1.0 - pop[-d + 1];
    }
  return s;
}

}  // namespace detail

// heavy prefixes -> centre hypotheses per head and competitor guess ->
// k-tuples of centres with grid phis -> weights by contrast ratios -> phis
// polished on low-order frequencies -> tests in order of misfit.
inline SeparatedResult learn_mixture_separated(const PlacementOracle& data, int k, const SeparationParams& p) {
  const PermMeasure& v = data.measure();
  const int n = v.n();
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  const int hl = 2 * (k - 1);
  if (n < hl + 2) throw std::invalid_argument("n too small for the head pairs");
  SeparatedResult out;
  const auto grid = midpoint_grid(p.beta);

  MeasurePrefixOracle po(v, std::max(p.prefix_length(n, k), hl));
  SeparationParams sp = p;
  sp.prefix_len = std::max(p.prefix_length(n, k), hl);
  const auto search = find_prefix_sequences(po, k, sp);
  out.prefix_count = search.prefixes.size();
  std::set<std::vector<int>> head_set;
  for (const auto& pre : search.prefixes) head_set.insert(std::vector<int>(pre.begin(), pre.begin() + hl));
  const std::vector<std::vector<int>> heads(head_set.begin(), head_set.end());
  out.head_count = heads.size();

  // centre hypotheses, counted over competitor guesses
  std::vector<std::map<Permutation, std::size_t>> per_head(heads.size());
  std::vector<std::size_t> failures(heads.size(), 0);
  std::vector<HeadTable> tables(heads.size());
  parallel_for(heads.size(), p.workers, [&](std::size_t h) {
    tables[h] = head_table(v, heads[h]);
    std::vector<std::size_t> idx(k - 1, 0);
    for (;;) {
      std::vector<double> phis(k - 1);
      for (int a = 0; a < k - 1; ++a) phis[a] = grid[idx[a]];
      for (int mask = 0; mask < (1 << (k - 1)); ++mask) {
        std::vector<char> same(k - 1);
        for (int a = 0; a < k - 1; ++a) same[a] = !(mask >> a & 1);
        try {
          ++per_head[h][extend_with_contrast(tables[h], contrast_tensor(phis, same)).center];
        } catch (const recovery_failure&) {
          ++failures[h];
        }
      }
      int a = 0;
      while (a < k - 1 && ++idx[a] == grid.size()) idx[a++] = 0;
      if (a == k - 1) break;
    }
  });
  std::map<Permutation, std::size_t> votes;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    out.recovery_failures += failures[h];
    for (const auto& [c, cnt] : per_head[h]) votes[c] += cnt;
  }
  std::vector<std::pair<Permutation, std::size_t>> ranked(votes.begin(), votes.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > p.max_centers) ranked.resize(p.max_centers);
  std::vector<Permutation> centers;
  for (auto& [c, cnt] : ranked) centers.push_back(c);
  std::sort(centers.begin(), centers.end());
  out.center_count = centers.size();
  if (centers.empty()) throw learning_failure("no centre hypotheses", 0, std::numeric_limits<double>::infinity());

  // per-centre head masses and low-order statistics on the grid
  const auto stats = detail::low_order_stats(v);
  const std::size_t dim = stats.size();
  std::vector<std::vector<double>> head_mass(centers.size());
  std::vector<std::vector<std::vector<double>>> model_stats(centers.size());
  parallel_for(centers.size(), p.workers, [&](std::size_t c) {
    const std::vector<int> head(centers[c].ranking().begin(), centers[c].ranking().begin() + hl);
    head_mass[c] = head_table(v, head, false).mass;
    for (double phi : grid) model_stats[c].push_back(detail::model_low_order_stats(phi, centers[c]));
  });

  auto misfit = [&](const std::vector<std::vector<double>*>& ms, const std::vector<double>& w) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      double m = 0.0;
      for (std::size_t i = 0; i < ms.size(); ++i) m += w[i] * (*ms[i])[d];
      s += std::abs(stats[d] - m);
    }
    return s;
  };

  // k-multisets of centres; repeated centres need distinct grid phis
  struct Scored {
    double score;
    std::vector<std::size_t> cs;
    std::vector<std::size_t> gs;
  };
  std::vector<std::vector<std::size_t>> tuples;
  {
    std::vector<std::size_t> t(k, 0);
    std::function<void(int, std::size_t)> rec = [&](int i, std::size_t from) {
      if (i == k) {
        tuples.push_back(t);
        return;
      }
      for (std::size_t c = from; c < centers.size(); ++c) {
        t[i] = c;
        rec(i + 1, c);
      }
    };
    rec(0, 0);
  }
  out.tuple_count = tuples.size();
  std::vector<std::vector<Scored>> best(tuples.size());
  parallel_for(tuples.size(), p.workers, [&](std::size_t ti) {
    const auto& cs = tuples[ti];
    std::vector<std::size_t> gs(k, 0);
    Scored top{std::numeric_limits<double>::infinity(), cs, gs};
    for (;;) {
      bool ok = true;
      for (int i = 1; i < k && ok; ++i)
        if (cs[i] == cs[i - 1] && gs[i] <= gs[i - 1]) ok = false;
      if (ok) {
        std::vector<MallowsModel> comps;
        for (int i = 0; i < k; ++i) comps.emplace_back(grid[gs[i]], centers[cs[i]]);
        std::vector<double> raw(k);
        try {
          for (int i = 0; i < k; ++i) raw[i] = detail::weight_ratio(head_mass[cs[i]], comps, i);
          bool in_range = true;
          for (double w : raw) in_range = in_range && w >= p.alpha / 2.0 && w <= 1.0 + p.alpha;
          if (in_range) {
            const auto w = detail::normalise_weights(raw).weights;
            std::vector<std::vector<double>*> ms;
            for (int i = 0; i < k; ++i) ms.push_back(&model_stats[cs[i]][gs[i]]);
            const double s = misfit(ms, w);
            if (s < top.score) top = {s, cs, gs};
          }
        } catch (const degenerate_input_error&) {
        }
      }
      int a = 0;
      while (a < k && ++gs[a] == grid.size()) gs[a++] = 0;
      if (a == k) break;
    }
    if (std::isfinite(top.score)) best[ti].push_back(top);
  });
  std::vector<Scored> all;
  for (auto& b : best) all.insert(all.end(), b.begin(), b.end());
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  if (all.size() > p.max_tests) all.resize(p.max_tests);

  // polish phis, recompute weights, test in order of misfit
  std::vector<SeparatedCandidate> cands(all.size());
  std::vector<char> valid(all.size(), 0);
  parallel_for(all.size(), p.workers, [&](std::size_t ai) {
    const auto& s = all[ai];
    std::vector<Permutation> cs;
    std::vector<double> phis;
    for (int i = 0; i < k; ++i) {
      cs.push_back(centers[s.cs[i]]);
      phis.push_back(grid[s.gs[i]]);
    }
    auto weights_at = [&](const std::vector<double>& ph) {
      std::vector<MallowsModel> comps;
      for (int i = 0; i < k; ++i) comps.emplace_back(ph[i], cs[i]);
      std::vector<double> raw(k);
      for (int i = 0; i < k; ++i) raw[i] = detail::weight_ratio(head_mass[s.cs[i]], comps, i);
      return raw;
    };
    auto clamp_phi = [](double x) { return std::clamp(x, 0.0, 1.0 - 1e-9); };
    if (p.refine) {
      const auto res = least_squares(
          [&](const std::vector<double>& x, std::vector<double>& r) {
            std::vector<double> ph(k);
            for (int i = 0; i < k; ++i) ph[i] = clamp_phi(x[i]);
            std::vector<double> w;
            try {
              w = detail::normalise_weights(weights_at(ph)).weights;
            } catch (const degenerate_input_error&) {
              w.assign(k, 1.0 / k);
            }
            std::vector<std::vector<double>> ms;
            for (int i = 0; i < k; ++i) ms.push_back(detail::model_low_order_stats(ph[i], cs[i]));
            for (std::size_t d = 0; d < dim; ++d) {
              double m = 0.0;
              for (int i = 0; i < k; ++i) m += w[i] * ms[i][d];
              r[d] = stats[d] - m;
            }
          },
          phis, dim);
      for (int i = 0; i < k; ++i) phis[i] = clamp_phi(res.x[i]);
    }
    WeightEstimate we;
    try {
      we = detail::normalise_weights(weights_at(phis));
    } catch (const degenerate_input_error&) {
      return;
    }
    std::vector<MallowsModel> comps;
    for (int i = 0; i < k; ++i) comps.emplace_back(phis[i], cs[i]);
    auto& c = cands[ai];
    c.mixture = MallowsMixture(comps, we.weights);
    c.raw_weights = we.raw;
    std::vector<std::vector<double>> ms;
    std::vector<std::vector<double>*> mp;
    for (int i = 0; i < k; ++i) ms.push_back(detail::model_low_order_stats(phis[i], cs[i]));
    for (auto& x : ms) mp.push_back(&x);
    c.score = misfit(mp, we.weights);
    valid[ai] = 1;
  });
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (valid[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return cands[a].score < cands[b].score; });
  double best_gap = std::numeric_limits<double>::infinity();
  for (auto i : order) {
    auto& c = cands[i];
    c.test = test_separated_close(data, c.mixture, p);
    c.tested = true;
    out.tested.push_back(c);
    best_gap = std::min(best_gap, std::max(c.test.order_gap - c.test.order_threshold,
                                           c.test.phi_gap - c.test.phi_threshold));
    if (c.test.accept) {
      out.mixture = c.mixture;
      out.raw_weights = c.raw_weights;
      out.test = c.test;
      return out;
    }
  }
  throw learning_failure("no candidate mixture was accepted", out.tested.size(), best_gap);
}

}  // namespace mallows
