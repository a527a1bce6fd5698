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
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mallows/errors.hpp"

namespace mallows {

// An ordered sequence of distinct element labels (not necessarily 1..n).
using Ranking = std::vector<int>;

// Position -> element, 1-based elements.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<int> ranking) : r_(std::move(ranking)) {
    if (r_.empty()) throw std::invalid_argument("permutation must have n >= 1");
    std::vector<char> seen(r_.size() + 1, 0);
    for (int e : r_) {
      if (e < 1 || e > static_cast<int>(r_.size()) || seen[e])
        throw std::invalid_argument("ranking is not a bijection on 1..n");
      seen[e] = 1;
    }
  }
  Permutation(std::initializer_list<int> il) : Permutation(std::vector<int>(il)) {}

  static Permutation identity(int n) {
    std::vector<int> r(n);
    std::iota(r.begin(), r.end(), 1);
    return Permutation(std::move(r));
  }

  int n() const { return static_cast<int>(r_.size()); }
  int operator[](int i) const { return r_[i]; }  // 0-based position
  const std::vector<int>& ranking() const { return r_; }

  // pos[e - 1] = 0-based position of element e.
  std::vector<int> positions() const {
    std::vector<int> pos(r_.size());
    for (int i = 0; i < n(); ++i) pos[r_[i] - 1] = i;
    return pos;
  }

  Permutation reversed() const {
    return Permutation(std::vector<int>(r_.rbegin(), r_.rend()));
  }

  std::string str() const {
    std::string s;
    for (int i = 0; i < n(); ++i) {
      if (i) s += ' ';
      s += std::to_string(r_[i]);
    }
    return s;
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> r_;
};

class ElementSubset {
 public:
  ElementSubset() = default;
  ElementSubset(std::vector<int> elems, int n) : e_(std::move(elems)) {
    std::sort(e_.begin(), e_.end());
    for (std::size_t i = 0; i < e_.size(); ++i) {
      if (e_[i] < 1 || e_[i] > n) throw std::invalid_argument("element out of range");
      if (i && e_[i] == e_[i - 1]) throw std::invalid_argument("duplicate element");
    }
  }
  const std::vector<int>& elements() const { return e_; }
  int size() const { return static_cast<int>(e_.size()); }
  bool contains(int x) const { return std::binary_search(e_.begin(), e_.end(), x); }

 private:
  std::vector<int> e_;
};

inline int kendall_tau(const Permutation& p, const Permutation& q) {
  if (p.n() != q.n()) throw std::invalid_argument("kendall_tau: size mismatch");
  const auto qp = q.positions();
  int d = 0;
  for (int i = 0; i < p.n(); ++i)
    for (int j = i + 1; j < p.n(); ++j)
      if (qp[p[i] - 1] > qp[p[j] - 1]) ++d;
  return d;
}

inline int inversions(const Permutation& p) {
  int d = 0;
  for (int i = 0; i < p.n(); ++i)
    for (int j = i + 1; j < p.n(); ++j)
      if (p[i] > p[j]) ++d;
  return d;
}

// Relative order of a sequence of distinct labels against a ranking given as
// label -> position; counts discordant pairs.
inline int inversions(const Ranking& r) {
  int d = 0;
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = i + 1; j < r.size(); ++j)
      if (r[i] > r[j]) ++d;
  return d;
}

// compose(p, r)[i] = r[p[i]]: relabel the elements of p through r. With this
// product d_KT(p, q) = inversions(compose(p, inverse(q))) and
// d_KT(compose(p, r), compose(q, r)) = d_KT(p, q).
inline Permutation compose(const Permutation& p, const Permutation& r) {
  if (p.n() != r.n()) throw std::invalid_argument("compose: size mismatch");
  std::vector<int> out(p.n());
  for (int i = 0; i < p.n(); ++i) out[i] = r[p[i] - 1];
  return Permutation(std::move(out));
}

inline Permutation inverse(const Permutation& p) {
  std::vector<int> out(p.n());
  for (int i = 0; i < p.n(); ++i) out[p[i] - 1] = i + 1;
  return Permutation(std::move(out));
}

inline Ranking restrict(const Permutation& p, const ElementSubset& s) {
  for (int e : s.elements())
    if (e > p.n()) throw std::invalid_argument("restrict: subset not contained in [n]");
  Ranking out;
  out.reserve(s.size());
  for (int i = 0; i < p.n(); ++i)
    if (s.contains(p[i])) out.push_back(p[i]);
  return out;
}

inline Ranking restrict(const Permutation& p, const std::vector<int>& elems) {
  return restrict(p, ElementSubset(elems, p.n()));
}

// Relabel a sequence of distinct labels to 1..m by sorted order.
inline Permutation relabel(const Ranking& r) {
  Ranking sorted = r;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    out[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), r[i]) -
                              sorted.begin()) + 1;
  return Permutation(std::move(out));
}

inline std::uint64_t factorial(int n) {
  std::uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

// Lexicographic rank of a sequence of distinct labels among all orderings of
// the same label set (0-based).
template <class Seq>
std::uint64_t lex_rank(const Seq& r, int m) {
  std::uint64_t rank = 0;
  for (int i = 0; i < m; ++i) {
    int smaller = 0;
    for (int j = i + 1; j < m; ++j)
      if (r[j] < r[i]) ++smaller;
    rank += static_cast<std::uint64_t>(smaller) * factorial(m - 1 - i);
  }
  return rank;
}

inline std::uint64_t lex_rank(const Permutation& p) { return lex_rank(p.ranking(), p.n()); }

inline Permutation lex_unrank(int n, std::uint64_t rank) {
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 1);
  std::vector<int> out;
  out.reserve(n);
  for (int i = n; i >= 1; --i) {
    const std::uint64_t f = factorial(i - 1);
    const auto idx = static_cast<std::size_t>(rank / f);
    rank %= f;
    out.push_back(pool[idx]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
  }
  return Permutation(std::move(out));
}

constexpr int kDefaultEnumerationCutoff = 8;
constexpr int kHardEnumerationCap = 10;

// MALLOWS_LAB_MAX_N raises (or lowers) the cutoff, never past the hard cap.
inline int enumeration_cutoff() {
  if (const char* env = std::getenv("MALLOWS_LAB_MAX_N")) {
    const int v = std::atoi(env);
    if (v >= 1) return std::min(v, kHardEnumerationCap);
  }
  return kDefaultEnumerationCutoff;
}

inline void require_enumerable(int n) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (n > enumeration_cutoff())
    throw resource_limit_error("n=" + std::to_string(n) + " exceeds the enumeration cutoff " +
                               std::to_string(enumeration_cutoff()));
}

// Calls f(const std::vector<int>& ranking) for each permutation in
// lexicographic order.
template <class F>
void for_each_permutation(int n, F&& f) {
  require_enumerable(n);
  std::vector<int> r(n);
  std::iota(r.begin(), r.end(), 1);
  do {
    f(static_cast<const std::vector<int>&>(r));
  } while (std::next_permutation(r.begin(), r.end()));
}

inline std::vector<Permutation> enumerate_sn(int n) {
  std::vector<Permutation> out;
  out.reserve(factorial(std::min(n, kHardEnumerationCap)));
  for_each_permutation(n, [&](const std::vector<int>& r) { out.emplace_back(r); });
  return out;
}

// Coefficients of prod_{j=1}^{n} (1 + q + ... + q^{j-1}).
inline std::vector<std::uint64_t> mahonian_counts(int n) {
  if (n < 1) throw std::invalid_argument("mahonian_counts: n must be >= 1");
  std::vector<std::uint64_t> c{1};
  for (int j = 2; j <= n; ++j) {
    std::vector<std::uint64_t> next(c.size() + j - 1, 0);
    for (std::size_t i = 0; i < c.size(); ++i)
      for (int t = 0; t < j; ++t) next[i + t] += c[i];
    c.swap(next);
  }
  return c;
}

inline Permutation parse_permutation(const std::string& line) {
  std::istringstream in(line);
  std::vector<int> r;
  int x;
  while (in >> x) r.push_back(x);
  if (!in.eof()) throw std::invalid_argument("malformed permutation line: " + line);
  return Permutation(std::move(r));
}

}  // namespace mallows
