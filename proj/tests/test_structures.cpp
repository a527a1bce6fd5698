#include <gtest/gtest.h>

#include <cmath>

#include "mallows/structures.hpp"
#include "oracles.hpp"

namespace mallows {
namespace {

const std::vector<std::vector<int>> kExampleBlocks{{1, 2}, {4, 5, 6}};

TEST(Satisfies, WorkedExample) {
  EXPECT_TRUE(satisfies(Permutation{1, 2, 3, 7, 6, 5, 4}, BlockStructure{kExampleBlocks}));
  EXPECT_FALSE(satisfies(Permutation{1, 2, 3, 7, 6, 5, 4}, OrderedBlockStructure{kExampleBlocks}));
  EXPECT_TRUE(satisfies(Permutation{1, 3, 4, 2, 5, 6, 7}, OrderStructure{kExampleBlocks}));
  EXPECT_FALSE(satisfies(Permutation{1, 3, 4, 2, 5, 6, 7}, BlockStructure{kExampleBlocks}));
  EXPECT_TRUE(satisfies(Permutation{1, 2, 3, 4, 5, 6, 7}, OrderedBlockStructure{kExampleBlocks}));
}

TEST(Satisfies, BlockOrderMatters) {
  EXPECT_FALSE(satisfies(Permutation{4, 5, 6, 1, 2, 3, 7}, BlockStructure{kExampleBlocks}));
  EXPECT_TRUE(satisfies(Permutation{4, 5, 6, 1, 2, 3, 7}, BlockStructure{{{4, 5, 6}, {1, 2}}}));
  EXPECT_THROW(satisfies(Permutation{1, 2, 3}, BlockStructure{{{1, 2}, {2, 3}}}), std::invalid_argument);
}

TEST(Satisfies, AgreesWithDefinitionOnAllOfS5) {
  const BlockStructure b{{{2, 4}, {1}, {3, 5}}};
  for (const auto& r : oracle::all_orderings(5)) {
    bool consecutive = true;
    int prev_end = -1;
    for (const auto& blk : b.blocks) {
      int lo = 99, hi = -1;
      for (int e : blk) {
        lo = std::min(lo, oracle::position_of(r, e));
        hi = std::max(hi, oracle::position_of(r, e));
      }
      consecutive = consecutive && hi - lo + 1 == static_cast<int>(blk.size()) && lo > prev_end;
      prev_end = hi;
    }
    EXPECT_EQ(satisfies(Permutation(r), b), consecutive);
  }
}

std::vector<double> outer_product(const std::vector<std::vector<double>>& factors) {
  std::vector<double> out{1.0};
  for (const auto& f : factors) {
    std::vector<double> next;
    for (double a : out)
      for (double b : f) next.push_back(a * b);
    out.swap(next);
  }
  return out;
}

TEST(BlockTensor, WholeSetIsVectorisation) {
  const MallowsModel m(0.45, Permutation{3, 1, 4, 2, 5});
  const auto t = block_tensor(PermMeasure::exact(m), BlockStructure{{{1, 2, 3, 4, 5}}});
  const auto v = vectorize(m);
  ASSERT_EQ(t.entries.size(), v.values.size());
  for (std::size_t i = 0; i < v.values.size(); ++i) EXPECT_NEAR(t.entries[i], v.values[i], 1e-15);
}

TEST(BlockTensor, TwoPairsExample) {
  const MallowsModel m(0.5, Permutation{1, 2, 3, 4});
  const BlockStructure b{{{1, 2}, {3, 4}}};
  const auto t = block_tensor(PermMeasure::exact(m), b);
  // brute force both sides
  double pr = 0.0;
  std::vector<double> brute(4, 0.0);
  for (const auto& r : oracle::all_orderings(4)) {
    const int p1 = oracle::position_of(r, 1), p2 = oracle::position_of(r, 2);
    const int p3 = oracle::position_of(r, 3), p4 = oracle::position_of(r, 4);
    if (std::abs(p1 - p2) != 1 || std::abs(p3 - p4) != 1 || std::max(p1, p2) > std::min(p3, p4)) continue;
    const double w = oracle::brute_pmf(0.5, {1, 2, 3, 4}, r);
    pr += w;
    brute[(p1 > p2 ? 2 : 0) + (p3 > p4 ? 1 : 0)] += w;
  }
  const auto expect = outer_product({local_vector(0.5, {1, 2}), local_vector(0.5, {3, 4})});
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(t.entries[i], brute[i], 1e-15);
    EXPECT_NEAR(t.entries[i], pr * expect[i], 1e-12);
  }
}

TEST(BlockTensor, UniformEntriesEqual) {
  const MallowsModel m(1.0, Permutation{2, 1, 3, 5, 4});
  const BlockStructure b{{{1, 4}, {2, 3, 5}}};
  const auto t = block_tensor(PermMeasure::exact(m), b);
  for (double e : t.entries) EXPECT_NEAR(e, t.entries.front(), 1e-15);
  EXPECT_NEAR(t.sum(), block_prob(m, b), 1e-14);
}

// Rank-one factorisation and consistency with block_prob on random inputs.
TEST(BlockTensor, RankOneFactorisation) {
  Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 3 + trial % 5;  // 3..7
    std::vector<int> c = oracle::identity(n);
    std::shuffle(c.begin(), c.end(), rng);
    const double phi = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const MallowsModel m(phi, Permutation(c));
    std::vector<int> elems = oracle::identity(n);
    std::shuffle(elems.begin(), elems.end(), rng);
    const int ell = 2 + static_cast<int>(rng() % std::min(5, n - 1));
    BlockStructure b;
    for (int i = 0; i < ell;) {
      const int size = std::min(ell - i, 1 + static_cast<int>(rng() % 3));
      b.blocks.emplace_back(elems.begin() + i, elems.begin() + i + size);
      i += size;
    }
    const auto t = block_tensor(PermMeasure::exact(m), b);
    const double pr = block_prob(m, b);
    std::vector<std::vector<double>> factors;
    for (const auto& blk : b.blocks) factors.push_back(local_vector(phi, restrict(m.center, blk)));
    const auto expect = outer_product(factors);
    ASSERT_EQ(t.entries.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(t.entries[i], pr * expect[i], 1e-12);
    EXPECT_NEAR(t.sum(), pr, 1e-12);
  }
}

TEST(BlockProb, Examples) {
  const MallowsModel m(0.5, Permutation{1, 2, 3});
  EXPECT_DOUBLE_EQ(block_prob(m, BlockStructure{}), 1.0);
  const double p = block_prob(m, BlockStructure{{{1, 2}}});
  double brute = 0.0;
  for (const auto& r : oracle::all_orderings(3))
    if (std::abs(oracle::position_of(r, 1) - oracle::position_of(r, 2)) == 1)
      brute += oracle::brute_pmf(0.5, {1, 2, 3}, r);
  EXPECT_NEAR(p, brute, 1e-15);
  EXPECT_GE(p, 1.0 / 81);
}

double lower_bound(int n, int ell) { return std::pow(static_cast<double>(n), -2.0 * ell); }

TEST(BlockProb, LowerBoundExhaustiveSmallN) {
  for (int n = 2; n <= 5; ++n)
    for (const auto& blocks : oracle::interval_structures(n, 4)) {
      BlockStructure b{blocks};
      for (double phi : {0.1, 0.5, 0.9, 1.0})
        EXPECT_GE(block_prob(MallowsModel(phi, Permutation::identity(n)), b), lower_bound(n, b.size()));
    }
}

TEST(BlockProb, LowerBoundRandomCentres) {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 6;
    std::vector<int> c = oracle::identity(n);
    std::shuffle(c.begin(), c.end(), rng);
    const auto all = oracle::interval_structures(n, 4);
    const auto& proto = all[rng() % all.size()];
    BlockStructure b;
    for (const auto& blk : proto) {
      b.blocks.emplace_back();
      for (int e : blk) b.blocks.back().push_back(c[e - 1]);  // relabel through the centre
    }
    const MallowsModel m(std::uniform_real_distribution<double>(0.0, 1.0)(rng), Permutation(c));
    ASSERT_TRUE(satisfies(m.center, b));
    EXPECT_GE(block_prob(m, b), lower_bound(n, b.size()));
  }
}

TEST(PairTestVector, Examples) {
  const auto v = pair_test_vector(0.5, true);
  EXPECT_NEAR(v.values[0], 1.0 / 3, 1e-15);
  EXPECT_NEAR(v.values[1], -2.0 / 3, 1e-15);
  EXPECT_NEAR(v.values[0] * (2.0 / 3) + v.values[1] * (1.0 / 3), 0.0, 1e-15);
  const auto w = pair_test_vector(0.5, false);
  EXPECT_NEAR(w.values[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(w.values[1], -1.0 / 3, 1e-15);
  EXPECT_THROW(pair_test_vector(1.0, true), std::invalid_argument);
}

TEST(PairTestVector, OrthogonalAndSeparating) {
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b <= 10; ++b) {
      const double phi_test = a / 10.0, phi = b / 10.0;
      for (bool x_first : {true, false}) {
        const auto t = pair_test_vector(phi_test, x_first);
        const auto same = local_vector(phi, x_first ? Ranking{1, 2} : Ranking{2, 1});
        const auto opposite = local_vector(phi, x_first ? Ranking{2, 1} : Ranking{1, 2});
        const double ds = t.values[0] * same[0] + t.values[1] * same[1];
        const double dop = t.values[0] * opposite[0] + t.values[1] * opposite[1];
        if (a == b) {
          EXPECT_NEAR(ds, 0.0, 1e-15);
        }
        EXPECT_GE(std::abs(ds), std::abs(phi - phi_test) / 4 - 1e-15);
        EXPECT_GE(std::abs(dop), (1 - phi * phi_test) / 4 - 1e-15);
      }
    }
  const auto t = pair_test_vector(0.2, true);
  const auto v = local_vector(0.6, {1, 2});
  EXPECT_GE(std::abs(t.values[0] * v[0] + t.values[1] * v[1]), 0.1);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(OrthoTestVector, NoOthersNormalises) {
  const auto t = ortho_test_vector({3.0, 4.0}, {});
  EXPECT_NEAR(t.values[0], 0.6, 1e-15);
  EXPECT_NEAR(t.values[1], 0.8, 1e-15);
}

TEST(OrthoTestVector, OrthogonalUnitAndPositive) {
  const auto perms = enumerate_sn(3);
  const double eps = 0.5;
  const double bound = (1.0 / 6) * std::pow(std::pow(eps, 3) / std::sqrt(6.0), 3);
  for (std::size_t i = 0; i < perms.size(); ++i)
    for (std::size_t j = 0; j < perms.size(); ++j)
      for (std::size_t l = j + 1; l < perms.size(); ++l) {
        if (i == j || i == l) continue;
        const auto target = vectorize(MallowsModel(0.5, perms[i])).values;
        const std::vector<std::vector<double>> others{vectorize(MallowsModel(0.5, perms[j])).values,
                                                      vectorize(MallowsModel(0.5, perms[l])).values};
        const auto t = ortho_test_vector(target, others);
        EXPECT_NEAR(dot(t.values, t.values), 1.0, 1e-12);
        for (const auto& o : others) EXPECT_NEAR(dot(t.values, o), 0.0, 1e-10);
        EXPECT_GE(dot(t.values, target), bound);
      }
}

TEST(OrthoTestVector, DegenerateTargetThrows) {
  EXPECT_THROW(ortho_test_vector({1.0, 2.0, 3.0}, {{1.0, 0.0, 1.0}, {0.0, 1.0, 1.0}}), degenerate_input_error);
  EXPECT_THROW(ortho_test_vector({1.0, 1.0}, {{2.0, 2.0}}), degenerate_input_error);
}

TEST(Contract, MatchesExplicitSum) {
  const MallowsModel m(0.3, Permutation{4, 2, 1, 3, 5});
  const BlockStructure b{{{1, 2}, {3, 4, 5}}};
  const auto t = block_tensor(PermMeasure::exact(m), b);
  std::vector<double> v1{0.3, -0.7}, v2{1, 2, 3, 4, 5, 6};
  double expect = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 6; ++j) expect += v1[i] * v2[j] * t.entries[i * 6 + j];
  EXPECT_NEAR(contract(t, {v1, v2}), expect, 1e-15);
}

}  // namespace
}  // namespace mallows
