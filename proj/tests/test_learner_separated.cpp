#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mallows/learner_separated.hpp"
#include "oracles.hpp"

namespace mallows {
namespace {

double brute_pair_order(double phi, int d) {
  const auto id = oracle::identity(d);
  double s = 0.0, z = 0.0;
  for (const auto& r : oracle::all_orderings(d)) {
    const double w = std::pow(phi, oracle::discordant_pairs(id, r));
    z += w;
    if (oracle::position_of(r, 1) < oracle::position_of(r, d)) s += w;
  }
  return s / z;
}

bool has_prefix(const std::vector<PrefixCandidate>& l, const std::vector<int>& pre) {
  for (const auto& c : l)
    if (c.prefix == pre) return true;
  return false;
}

std::vector<int> head_of(const Permutation& p, int len) {
  return std::vector<int>(p.ranking().begin(), p.ranking().begin() + len);
}

TEST(PairOrderProb, Examples) {
  for (double phi : {0.0, 0.3, 0.5, 0.9}) EXPECT_NEAR(pair_order_prob(phi, 2), 1.0 / (1.0 + phi), 1e-15);
  for (int d = 2; d <= 7; ++d) EXPECT_NEAR(pair_order_prob(1.0, d), 0.5, 1e-15);
  EXPECT_NEAR(pair_order_prob(0.5, 4), brute_pair_order(0.5, 4), 1e-15);
  EXPECT_THROW(pair_order_prob(0.5, 1), std::invalid_argument);
  EXPECT_THROW(pair_order_prob(1.5, 3), std::invalid_argument);
}

TEST(PairOrderProb, MatchesEnumerationUpToSeven) {
  for (int d = 2; d <= 7; ++d)
    for (double phi = 0.0; phi <= 1.0 + 1e-12; phi += 0.05)
      EXPECT_NEAR(pair_order_prob(std::min(phi, 1.0), d), brute_pair_order(std::min(phi, 1.0), d), 1e-12)
          << "d=" << d << " phi=" << phi;
}

TEST(FindPrefixes, PointMassGivesItsPrefix) {
  const Permutation c{4, 1, 5, 2, 3, 6};
  SeparationParams p;
  p.prefix_len = 3;
  const auto l = find_prefixes(sample_mixture(MallowsMixture(MallowsModel(0.0, c)), 200, 1).perms, 1, p);
  ASSERT_EQ(l.size(), midpoint_grid(p.beta).size());
  for (const auto& e : l) EXPECT_EQ(e.prefix, (std::vector<int>{4, 1, 5}));
}

TEST(FindPrefixes, PrefixLongerThanNThrows) {
  SeparationParams p;
  p.prefix_len = 7;
  EXPECT_THROW(find_prefixes(std::vector<Permutation>{Permutation::identity(5)}, 1, p), std::invalid_argument);
}

TEST(FindPrefixes, TwoComponentsBothPrefixesFound) {
  const Permutation c1 = Permutation::identity(12);
  const Permutation c2{9, 12, 3, 7, 1, 11, 5, 2, 10, 4, 8, 6};
  const MallowsMixture mix({MallowsModel(0.2, c1), MallowsModel(0.6, c2)}, {0.5, 0.5});
  SeparationParams p;
  p.gamma = 0.4;
  p.alpha = 0.4;
  p.prefix_len = 4;
  const auto l = find_prefixes(sample_mixture(mix, 100000, 12).perms, 2, p);
  EXPECT_TRUE(has_prefix(l, head_of(c1, 4)));
  EXPECT_TRUE(has_prefix(l, head_of(c2, 4)));
  for (const auto& e : l) {
    const auto& g = midpoint_grid(p.beta);
    EXPECT_NE(std::find(g.begin(), g.end(), e.phi_estimate), g.end());
  }
}

TEST(FindPrefixes, LocalQueriesMatchExactCounting) {
  const MallowsMixture mix({MallowsModel(0.3, Permutation{1, 2, 3, 4, 5, 6}), MallowsModel(0.5, Permutation{6, 4, 2, 5, 3, 1})},
                           {0.5, 0.5});
  SeparationParams p;
  p.gamma = 0.3;
  p.alpha = 0.4;
  p.prefix_len = 3;
  MeasurePrefixOracle exact(PermMeasure::exact(mix), 3);
  LocalQueryOracle lq(mix);
  LocalPrefixOracle local(lq, 0.01);
  const auto a = find_prefix_sequences(exact, 2, p);
  const auto b = find_prefix_sequences(local, 2, p);
  EXPECT_EQ(a.prefixes, b.prefixes);
  ASSERT_GT(lq.ledger().size(), 0u);
  EXPECT_EQ(lq.ledger().total_cost_exact(), mpq_class(10000) * static_cast<long>(lq.ledger().size()));
}

TEST(ExtendPrefix, SingleComponentFromSamples) {
  const Permutation c{3, 7, 1, 8, 5, 2, 6, 4};
  const auto data = PlacementOracle::empirical(sample_mixture(MallowsMixture(MallowsModel(0.5, c)), 100000, 8).perms, 0.05);
  const auto lists = extend_prefix(data, {{}}, {0.5}, 1);
  ASSERT_EQ(lists.size(), 1u);
  ASSERT_EQ(lists[0].size(), 1u);
  EXPECT_EQ(lists[0][0], c);
}

TEST(ExtendPrefix, TwoComponentsExact) {
  const Permutation c1 = Permutation::identity(8), c2{8, 6, 3, 1, 7, 2, 5, 4};
  const MallowsMixture mix({MallowsModel(0.2, c1), MallowsModel(0.6, c2)}, {0.5, 0.5});
  const auto v = PermMeasure::exact(mix);
  const auto lists = extend_prefix(v, {head_of(c1, 4), head_of(c2, 4)}, {0.2, 0.6}, 2);
  ASSERT_EQ(lists.size(), 2u);
  EXPECT_EQ(lists[0].size(), 2u);
  EXPECT_NE(std::find(lists[0].begin(), lists[0].end(), c1), lists[0].end());
  EXPECT_NE(std::find(lists[1].begin(), lists[1].end(), c2), lists[1].end());
  // determinism
  EXPECT_EQ(extend_prefix(v, {head_of(c1, 4), head_of(c2, 4)}, {0.2, 0.6}, 2), lists);
}

TEST(ExtendPrefix, SymmetricHeadGivesSameOrderUnderBothGuesses) {
  // the head pair appears both ways round with equal mass
  const Permutation a{1, 2, 3, 4, 5, 6}, b{2, 1, 3, 4, 5, 6}, c{6, 5, 4, 3, 2, 1};
  const MallowsMixture mix({MallowsModel(0.3, a), MallowsModel(0.3, b), MallowsModel(0.6, c)}, {0.3, 0.3, 0.4});
  const auto t = head_table(PermMeasure::exact(mix), {1, 2});
  const auto same = extend_with_contrast(t, contrast_tensor({0.6}, {1})).center;
  const auto opposite = extend_with_contrast(t, contrast_tensor({0.6}, {0})).center;
  EXPECT_EQ(same, opposite);
}

TEST(ExtendPrefix, ContrastGapMeetsBound) {
  std::mt19937_64 rng(31);
  const double gamma = 0.3, alpha = 0.3;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6;
    const Permutation c1 = lex_unrank(n, rng() % factorial(n));
    const Permutation c2 = lex_unrank(n, rng() % factorial(n));
    const double phi1 = 0.1 + 0.1 * (trial % 2), phi2 = 0.6;
    const MallowsMixture mix({MallowsModel(phi1, c1), MallowsModel(phi2, c2)}, {0.4, 0.6});
    const auto head = head_of(c1, 2);
    const auto t = head_table(PermMeasure::exact(mix), head);
    const auto z = contrast_tensor({phi2}, detail::head_orientations(head, c2));
    const auto pos = c1.positions();
    for (int x : t.outside())
      for (int y : t.outside()) {
        if (pos[x - 1] >= pos[y - 1]) continue;
        const auto c = pair_contrast(t, z, x, y);
        const double bound = alpha * std::pow(gamma / 4.0, 1) * std::pow(gamma, 4);
        EXPECT_GE(std::abs(c.x_first) - std::abs(c.y_first), bound) << "trial " << trial;
      }
  }
}

TEST(EstimateWeights, SingleComponentIsOne) {
  const Permutation c{2, 3, 1, 4};
  const auto w = estimate_weights(PermMeasure::exact(MallowsModel(0.4, c)), {c}, {0.4});
  EXPECT_DOUBLE_EQ(w.weights[0], 1.0);
  EXPECT_NEAR(w.raw[0], 1.0, 1e-15);
}

TEST(EstimateWeights, TwoComponentsExact) {
  const Permutation c1{1, 2, 3, 4, 5}, c2{5, 3, 1, 2, 4};
  const MallowsMixture mix({MallowsModel(0.3, c1), MallowsModel(0.7, c2)}, {0.3, 0.7});
  const auto w = estimate_weights(PermMeasure::exact(mix), {c1, c2}, {0.3, 0.7});
  EXPECT_NEAR(w.weights[0], 0.3, 1e-8);
  EXPECT_NEAR(w.weights[1], 0.7, 1e-8);
}

TEST(EstimateWeights, ExactAcrossSeparatedGrid) {
  std::mt19937_64 rng(77);
  for (int k = 1; k <= 3; ++k)
    for (int n = std::max(4, 2 * k); n <= 8; ++n) {
      std::vector<MallowsModel> comps;
      std::vector<double> w;
      for (int i = 0; i < k; ++i) {
        comps.emplace_back(0.15 + 0.3 * i, lex_unrank(n, rng() % factorial(n)));
        w.push_back(1.0 + i);
      }
      double s = 0.0;
      for (double x : w) s += x;
      for (double& x : w) x /= s;
      const MallowsMixture mix(comps, w);
      std::vector<Permutation> cs;
      std::vector<double> ph;
      for (const auto& c : comps) {
        cs.push_back(c.center);
        ph.push_back(c.phi);
      }
      const auto est = estimate_weights(PermMeasure::exact(mix), cs, ph);
      for (int i = 0; i < k; ++i) EXPECT_NEAR(est.raw[i], w[i], 1e-8) << "k=" << k << " n=" << n;
    }
}

TEST(EstimateWeights, ClipsAndReportsRaw) {
  // wrong phi makes the raw ratio leave [0,1]
  const Permutation c1{1, 2, 3, 4}, c2{4, 3, 2, 1};
  const MallowsMixture mix({MallowsModel(0.1, c1), MallowsModel(0.8, c2)}, {0.9, 0.1});
  const auto w = estimate_weights(PermMeasure::exact(mix), {c1, c2}, {0.1, 0.05});
  double s = 0.0;
  for (double x : w.weights) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
    s += x;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_EQ(w.raw.size(), 2u);
}

TEST(EstimateWeights, VanishingContrastThrows) {
  const Permutation c{1, 2, 3, 4};
  const MallowsMixture mix({MallowsModel(0.4, c), MallowsModel(0.4, c)}, {0.5, 0.5});
  EXPECT_THROW(estimate_weights(PermMeasure::exact(mix), {c, c}, {0.4, 0.4}), degenerate_input_error);
}

const Permutation kC1 = Permutation::identity(8);
const Permutation kC2{8, 6, 3, 1, 7, 2, 5, 4};

SeparationParams tester_params() {
  SeparationParams p;
  p.gamma = 0.4;
  p.alpha = 0.4;
  p.theta = 0.04;
  return p;
}

TEST(TestSeparated, AcceptsTruth) {
  const MallowsMixture mix({MallowsModel(0.2, kC1), MallowsModel(0.6, kC2)}, {0.5, 0.5});
  const auto t = test_separated_close(PlacementOracle::exact(mix), mix, tester_params());
  EXPECT_TRUE(t.accept) << t.reason;
}

TEST(TestSeparated, RejectsSwappedPair) {
  const MallowsMixture mix({MallowsModel(0.2, kC1), MallowsModel(0.6, kC2)}, {0.5, 0.5});
  const MallowsMixture bad({MallowsModel(0.2, Permutation{1, 2, 3, 4, 6, 5, 7, 8}), MallowsModel(0.6, kC2)}, {0.5, 0.5});
  const auto t = test_separated_close(PlacementOracle::exact(mix), bad, tester_params());
  EXPECT_FALSE(t.accept);
  EXPECT_GT(t.order_gap, t.order_threshold);
}

TEST(TestSeparated, RejectsShiftedPhi) {
  const auto p = tester_params();
  const MallowsMixture mix({MallowsModel(0.2, kC1), MallowsModel(0.6, kC2)}, {0.5, 0.5});
  const MallowsMixture bad({MallowsModel(0.2, kC1), MallowsModel(0.6 + 2 * p.theta, kC2)}, {0.5, 0.5});
  const auto t = test_separated_close(PlacementOracle::exact(mix), bad, p);
  EXPECT_FALSE(t.accept);
  EXPECT_GT(t.phi_gap, t.phi_threshold);
}

TEST(TestSeparated, AcceptsTruthFromSamples) {
  const MallowsMixture mix({MallowsModel(0.2, kC1), MallowsModel(0.6, kC2)}, {0.5, 0.5});
  const auto data = PlacementOracle::empirical(sample_mixture(mix, 200000, 4).perms, 0.05);
  const auto t = test_separated_close(data, mix, tester_params());
  EXPECT_TRUE(t.accept) << t.reason;
}

TEST(LearnSeparated, SingleComponent) {
  const Permutation c{5, 2, 6, 1, 4, 3};
  const auto r = learn_mixture_separated(PlacementOracle::exact(MallowsMixture(MallowsModel(0.35, c))), 1, tester_params());
  EXPECT_EQ(r.mixture.components[0].center, c);
  EXPECT_NEAR(r.mixture.components[0].phi, 0.35, 1e-6);
  EXPECT_DOUBLE_EQ(r.mixture.weights[0], 1.0);
}

TEST(LearnSeparated, TwoComponentsExact) {
  const MallowsMixture mix({MallowsModel(0.2, kC1), MallowsModel(0.6, kC2)}, {0.3, 0.7});
  const auto r = learn_mixture_separated(PlacementOracle::exact(mix), 2, tester_params());
  for (int i = 0; i < 2; ++i) {
    const int j = r.mixture.components[0].center == mix.components[i].center ? 0 : 1;
    EXPECT_EQ(r.mixture.components[j].center, mix.components[i].center);
    EXPECT_NEAR(r.mixture.components[j].phi, mix.components[i].phi, 1e-6);
    EXPECT_NEAR(r.mixture.weights[j], mix.weights[i], 1e-6);
  }
}

TEST(LearnSeparated, SampledIsDeterministicAndAccurate) {
  const Permutation c2{7, 3, 10, 1, 5, 9, 2, 8, 4, 6};
  const MallowsMixture mix({MallowsModel(0.2, Permutation::identity(10)), MallowsModel(0.6, c2)}, {0.5, 0.5});
  auto p = tester_params();
  p.prefix_len = 4;
  const auto data = PlacementOracle::empirical(sample_mixture(mix, 300000, 7).perms, 0.05);
  const auto a = learn_mixture_separated(data, 2, p);
  p.workers = 3;
  const auto b = learn_mixture_separated(data, 2, p);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(a.mixture.components[i].center, b.mixture.components[i].center);
    EXPECT_EQ(a.mixture.components[i].phi, b.mixture.components[i].phi);
    EXPECT_EQ(a.mixture.weights[i], b.mixture.weights[i]);
  }
  for (int i = 0; i < 2; ++i) {
    const int j = a.mixture.components[0].center == mix.components[i].center ? 0 : 1;
    EXPECT_EQ(a.mixture.components[j].center, mix.components[i].center);
    EXPECT_NEAR(a.mixture.components[j].phi, mix.components[i].phi, 0.05);
    EXPECT_NEAR(a.mixture.weights[j], mix.weights[i], 0.05);
  }
}

}  // namespace
}  // namespace mallows
