#include <gtest/gtest.h>

#include <cmath>

#include "mallows/distance.hpp"
#include "oracles.hpp"

namespace mallows {
namespace {

TEST(TvExact, Examples) {
  const MallowsModel a(0.5, Permutation{1, 2}), b(0.5, Permutation{2, 1});
  EXPECT_NEAR(tv_exact(a, a).value, 0.0, 1e-15);
  EXPECT_NEAR(tv_exact(a, b).value, 1.0 / 3, 1e-15);
  EXPECT_EQ(tv_exact(a, b).mode, "exact");
  const MallowsModel u(1.0, Permutation{3, 1, 2, 4});
  DistributionVector uniform{4, std::vector<double>(24, 1.0 / 24)};
  EXPECT_NEAR(tv_exact(vectorize(u), uniform).value, 0.0, 1e-15);
}

TEST(TvExact, RejectsNonDistributions) {
  DistributionVector p{2, {0.5, 0.5}}, bad{2, {0.7, 0.7}}, neg{2, {1.5, -0.5}};
  EXPECT_THROW(tv_exact(p, bad), std::invalid_argument);
  EXPECT_THROW(tv_exact(p, neg), std::invalid_argument);
  EXPECT_THROW(tv_exact(p, DistributionVector{3, std::vector<double>(6, 1.0 / 6)}), std::invalid_argument);
}

TEST(TvExact, HalfL1Identity) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 5;
    std::vector<int> c1 = oracle::identity(n), c2 = oracle::identity(n);
    std::shuffle(c1.begin(), c1.end(), rng);
    std::shuffle(c2.begin(), c2.end(), rng);
    const MallowsModel a(0.1 + 0.017 * trial, Permutation(c1)), b(0.9 - 0.013 * trial, Permutation(c2));
    EXPECT_NEAR(l1_combination({a, b}, {1.0, -1.0}), 2 * tv_exact(a, b).value, 1e-12);
  }
}

TEST(TvEmpirical, Examples) {
  const MallowsModel a(0.5, Permutation{1, 2}), b(0.5, Permutation{2, 1});
  Rng r1(42), r2(42);
  auto same = tv_empirical([&] { return sample_rim(a, r1); }, [&] { return sample_rim(a, r2); }, 1000);
  EXPECT_EQ(same.value, 0.0);
  EXPECT_EQ(same.mode, "empirical");

  Rng ra(1), rb(2);
  const auto est = tv_empirical([&] { return sample_rim(a, ra); }, [&] { return sample_rim(b, rb); }, 1'000'000);
  EXPECT_NEAR(est.value, 1.0 / 3, 0.01);
  EXPECT_GT(est.tolerance, 0.0);

  const MallowsModel p(0.0, Permutation{1, 2, 3}), q(0.0, Permutation{2, 1, 3});
  Rng rp(3), rq(4);
  EXPECT_EQ(tv_empirical([&] { return sample_rim(p, rp); }, [&] { return sample_rim(q, rq); }, 500).value, 1.0);
}

TEST(DistinctCentres, Examples) {
  const auto r = check_distinct_centers_bound(MallowsModel(0.5, Permutation{1, 2}), MallowsModel(0.5, Permutation{2, 1}), 0.5);
  EXPECT_NEAR(r.value, 1.0 / 3, 1e-15);
  EXPECT_DOUBLE_EQ(r.bound, 0.25);
  EXPECT_TRUE(r.holds);
  const auto s = check_distinct_centers_bound(MallowsModel(0.0, Permutation{1, 2, 3}), MallowsModel(0.0, Permutation{1, 3, 2}), 0.99);
  EXPECT_NEAR(s.value, 1.0, 1e-15);
  EXPECT_THROW(check_distinct_centers_bound(MallowsModel(0.5, Permutation{1, 2}), MallowsModel(0.2, Permutation{1, 2}), 0.1),
               precondition_violation);
  EXPECT_THROW(check_distinct_centers_bound(MallowsModel(0.95, Permutation{1, 2}), MallowsModel(0.2, Permutation{2, 1}), 0.1),
               precondition_violation);
}

TEST(DistinctCentres, RandomInstances) {
  Rng rng(500);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + trial % 5;
    std::vector<int> c1 = oracle::identity(n), c2;
    do {
      c2 = oracle::identity(n);
      std::shuffle(c1.begin(), c1.end(), rng);
      std::shuffle(c2.begin(), c2.end(), rng);
    } while (c1 == c2);
    std::uniform_real_distribution<double> u(0.0, 0.95);
    const double p1 = u(rng), p2 = u(rng);
    const double eps = (1.0 - std::max(p1, p2)) * (1 - 1e-12);
    EXPECT_TRUE(check_distinct_centers_bound(MallowsModel(p1, Permutation(c1)), MallowsModel(p2, Permutation(c2)), eps).holds);
  }
}

TEST(SameCentre, Examples) {
  const Permutation c{1, 2, 3, 4};
  const auto eq = check_same_center_bound(MallowsModel(0.5, c), MallowsModel(0.5, c), 0.2);
  EXPECT_EQ(eq.value, 0.0);
  EXPECT_TRUE(eq.holds);
  const auto r = check_same_center_bound(MallowsModel(0.5, c), MallowsModel(0.5 + 0.04 / 640, c), 0.2);
  EXPECT_TRUE(r.holds);
  EXPECT_LE(r.value, 0.2);
  EXPECT_THROW(check_same_center_bound(MallowsModel(0.5, c), MallowsModel(0.6, c), 0.2), precondition_violation);
  EXPECT_THROW(check_same_center_bound(MallowsModel(0.5, c), MallowsModel(0.5, Permutation{2, 1, 3, 4}), 0.2),
               precondition_violation);
}

TEST(SameCentre, SweepAndRatioBounds) {
  for (int n = 3; n <= 7; ++n)
    for (double mu : {0.1, 0.3}) {
      const double gap = same_center_gap(n, mu) * (1 - 1e-9);
      for (int t = 0; t <= 10; ++t) {
        const double phi = t / 10.0;
        for (double other : {phi + gap, phi - gap}) {
          if (other < 0.0 || other > 1.0) continue;
          const Permutation c = Permutation::identity(n);
          EXPECT_TRUE(check_same_center_bound(MallowsModel(phi, c), MallowsModel(other, c), mu).holds);
          if (n <= 6 && phi > 0.0 && other > 0.0) {
            const auto r = pmf_ratio_range(MallowsModel(phi, c), MallowsModel(other, c));
            EXPECT_GE(r.min, 1 - mu / 2) << n << " " << phi;
            EXPECT_LE(r.max, 1 + mu / 2) << n << " " << phi;
          }
        }
      }
    }
}

TEST(L1Combination, Examples) {
  const MallowsModel a(0.3, Permutation{2, 3, 1}), b(0.7, Permutation{1, 3, 2});
  EXPECT_NEAR(l1_combination({a}, {1.0}), 1.0, 1e-14);
  EXPECT_NEAR(l1_combination({a, a}, {1.0, -1.0}), 0.0, 1e-15);
  EXPECT_NEAR(l1_combination({a, b}, {1.0, -1.0}), 2 * tv_exact(a, b).value, 1e-14);
  EXPECT_THROW(l1_combination({a, b}, {1.0}), std::invalid_argument);
}

}  // namespace
}  // namespace mallows
