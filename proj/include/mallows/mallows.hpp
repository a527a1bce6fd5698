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
#include <cstdint>
#include <limits>
#include <random>
#include <thread>
#include <utility>
#include <vector>

#include "mallows/permutation.hpp"

namespace mallows {

// prod_{i=1}^{n} (1 + phi + ... + phi^{i-1}).
inline double normalizer(int n, double phi) {
  double z = 1.0;
  double partial = 1.0;  // 1 + ... + phi^{i-1}
  double power = 1.0;
  for (int i = 2; i <= n; ++i) {
    power *= phi;
    partial += power;
    z *= partial;
  }
  return z;
}

inline double log_normalizer(int n, double phi) {
  double lz = 0.0;
  double partial = 1.0, power = 1.0;
  for (int i = 2; i <= n; ++i) {
    power *= phi;
    partial += power;
    lz += std::log(partial);
  }
  return lz;
}

// 1 + phi + ... + phi^{m-1}
inline double geometric_sum(int m, double phi) {
  double s = 0.0, p = 1.0;
  for (int i = 0; i < m; ++i) {
    s += p;
    p *= phi;
  }
  return s;
}

struct MallowsModel {
  double phi = 1.0;
  Permutation center;

  MallowsModel() = default;
  MallowsModel(double phi_, Permutation center_) : phi(phi_), center(std::move(center_)) {
    if (!(phi >= 0.0 && phi <= 1.0)) throw std::invalid_argument("phi must lie in [0,1]");
  }
  int n() const { return center.n(); }
};

struct MallowsMixture {
  std::vector<MallowsModel> components;
  std::vector<double> weights;

  MallowsMixture() = default;
  MallowsMixture(std::vector<MallowsModel> comps, std::vector<double> w)
      : components(std::move(comps)), weights(std::move(w)) {
    if (components.empty()) throw std::invalid_argument("mixture needs k >= 1");
    if (weights.size() != components.size())
      throw std::invalid_argument("weights and components differ in length");
    double s = 0.0;
    for (double x : weights) {
      if (x < 0.0) throw std::invalid_argument("negative mixing weight");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("weights must sum to 1");
    for (const auto& c : components)
      if (c.n() != components.front().n())
        throw std::invalid_argument("components disagree on n");
  }
  explicit MallowsMixture(MallowsModel m) : MallowsMixture({std::move(m)}, {1.0}) {}

  int n() const { return components.front().n(); }
  int k() const { return static_cast<int>(components.size()); }
};

inline double log_pmf(const MallowsModel& m, const Permutation& p) {
  const int d = kendall_tau(p, m.center);
  if (m.phi == 0.0) return d == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return d * std::log(m.phi) - log_normalizer(m.n(), m.phi);
}

inline double pmf(const MallowsModel& m, const Permutation& p) {
  return std::exp(log_pmf(m, p));
}

inline double pmf(const MallowsMixture& mix, const Permutation& p) {
  double s = 0.0;
  for (int i = 0; i < mix.k(); ++i) s += mix.weights[i] * pmf(mix.components[i], p);
  return s;
}

// Probability that a draw from M(phi, center) starts with the elements of
// seq in that order. Placing s_t first among the remaining elements costs
// phi^{r_t}, r_t = number of remaining elements ahead of s_t in the centre.
template <class Seq>
double prefix_prob(double phi, const Permutation& center, const Seq& seq, std::size_t len) {
  const int n = center.n();
  const auto cpos = center.positions();
  std::vector<char> used(n + 1, 0);
  double p = 1.0;
  for (std::size_t t = 0; t < len; ++t) {
    const int e = seq[t];
    int r = 0;
    for (int i = 0; i < cpos[e - 1]; ++i)
      if (!used[center[i]]) ++r;
    used[e] = 1;
    const double num = r == 0 ? 1.0 : std::pow(phi, r);
    p *= num / geometric_sum(n - static_cast<int>(t), phi);
  }
  return p;
}

inline double prefix_prob(double phi, const Permutation& center, const std::vector<int>& seq) {
  return prefix_prob(phi, center, seq, seq.size());
}

// Pr[element 1 precedes element d] under M(phi, (1, ..., d)).
inline double pair_order_prob(double phi, int d) {
  if (d < 2) throw std::invalid_argument("pair_order_prob: d must be at least 2");
  if (!(phi >= 0.0 && phi <= 1.0)) throw std::invalid_argument("phi must lie in [0,1]");
  double num = 0.0;
  for (int r = 1; r <= d; ++r)
    for (int s = r + 1; s <= d; ++s) num += std::pow(phi, r - 1 + d - s);
  return num / (geometric_sum(d, phi) * geometric_sum(d - 1, phi));
}

// Length-n! vector indexed by lexicographic rank.
struct DistributionVector {
  int n = 0;
  std::vector<double> values;

  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

namespace detail {

// phi^d / Z for d = 0..n(n-1)/2.
inline std::vector<double> distance_weights(int n, double phi) {
  const int dmax = n * (n - 1) / 2;
  std::vector<double> w(dmax + 1, 0.0);
  const double z = normalizer(n, phi);
  double p = 1.0;
  for (int d = 0; d <= dmax; ++d) {
    w[d] = p / z;
    p *= phi;
  }
  if (phi == 0.0) w.assign(dmax + 1, 0.0), w[0] = 1.0;
  return w;
}

}  // namespace detail

inline DistributionVector vectorize(const MallowsModel& m) {
  const int n = m.n();
  require_enumerable(n);
  const auto w = detail::distance_weights(n, m.phi);
  const auto cpos = m.center.positions();
  DistributionVector out{n, {}};
  out.values.reserve(factorial(n));
  for_each_permutation(n, [&](const std::vector<int>& r) {
    int d = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (cpos[r[i] - 1] > cpos[r[j] - 1]) ++d;
    out.values.push_back(w[d]);
  });
  return out;
}

inline DistributionVector vectorize(const MallowsMixture& mix) {
  DistributionVector out{mix.n(), std::vector<double>(factorial(mix.n()), 0.0)};
  for (int i = 0; i < mix.k(); ++i) {
    const auto v = vectorize(mix.components[i]);
    for (std::size_t j = 0; j < v.values.size(); ++j)
      out.values[j] += mix.weights[i] * v.values[j];
  }
  return out;
}

// Repeated insertion: the element of center rank i+1 goes into one of i+1
// slots of the partial ranking; the slot after everything inserted so far has
// weight 1 and every step towards the front multiplies the weight by phi.
template <class URBG>
Permutation sample_rim(const MallowsModel& m, URBG& rng) {
  const int n = m.n();
  std::vector<int> out;
  out.reserve(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    // slot j in 0..i, weight phi^{i-j}
    int slot = i;
    if (m.phi > 0.0 && i > 0) {
      const double total = geometric_sum(i + 1, m.phi);
      double u = unif(rng) * total;
      double w = 1.0;
      slot = i;
      while (slot > 0 && u >= w) {
        u -= w;
        w *= m.phi;
        --slot;
      }
    }
    out.insert(out.begin() + slot, m.center[i]);
  }
  return Permutation(std::move(out));
}

struct MixtureDraw {
  Permutation perm;
  int component;
};

template <class URBG>
MixtureDraw mixture_sample(const MallowsMixture& mix, URBG& rng) {
  std::discrete_distribution<int> pick(mix.weights.begin(), mix.weights.end());
  const int c = mix.k() == 1 ? 0 : pick(rng);
  return {sample_rim(mix.components[c], rng), c};
}

// Seeding: splitmix64 finaliser; stream s of master seed m is seeded with
// splitmix64(m ^ splitmix64(s + 1)).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 1));
}

// FNV-1a of a tag, mixed with a trial index: seeds per (module, trial).
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag,
                                 std::uint64_t trial) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(derive_seed(master, h), trial);
}

using Rng = std::mt19937_64;

// Runs body(i) for i in [0, count) on up to `workers` threads; body writes to
// slot i only, so results do not depend on the worker count.
template <class F>
void parallel_for(std::size_t count, int workers, F&& body) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += w) body(i);
    });
  for (auto& th : pool) th.join();
}

constexpr std::size_t kSampleChunk = 4096;

struct SampleSet {
  std::vector<Permutation> perms;
  std::vector<int> components;  // filled only when traced
};

// Chunk c of the output uses stream derive_seed(seed, c), independent of how
// chunks are spread over workers.
inline SampleSet sample_mixture(const MallowsMixture& mix, std::size_t count, std::uint64_t seed,
                                int workers = 1, bool trace = false) {
  SampleSet out;
  out.perms.resize(count);
  if (trace) out.components.resize(count);
  const std::size_t chunks = (count + kSampleChunk - 1) / kSampleChunk;
  parallel_for(chunks, workers, [&](std::size_t c) {
    Rng rng(derive_seed(seed, c));
    const std::size_t hi = std::min(count, (c + 1) * kSampleChunk);
    for (std::size_t i = c * kSampleChunk; i < hi; ++i) {
      auto d = mixture_sample(mix, rng);
      out.perms[i] = std::move(d.perm);
      if (trace) out.components[i] = d.component;
    }
  });
  return out;
}

}  // namespace mallows
