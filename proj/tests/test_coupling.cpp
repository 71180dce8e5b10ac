#include <gtest/gtest.h>

#include "schelling/coupling.hpp"
#include "test_util.hpp"

using namespace schelling;

TEST(Coupling, InitialTaintCount) {
  RandomSource rng(1);
  const auto cs = init_coupled(24, 6, 1, rng);
  EXPECT_EQ(cs.taint_count(), 4u);
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(cs.tainted(i), i % 6 == 0);
  const auto wide = init_coupled(24, 6, 1, rng, TaintSeed::crossing_windows);
  EXPECT_EQ(wide.taint_count(), 8u);
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(wide.tainted(i), i % 6 == 0 || i % 6 == 5);
}

TEST(Coupling, InitialTaintClassesForLargerWindow) {
  RandomSource rng(2);
  const auto cs = init_coupled(120, 12, 3, rng);
  EXPECT_EQ(cs.taint_count(), 120u * 5 / 12);
  for (std::size_t i = 0; i < 120; ++i) {
    const auto c = static_cast<long>(i % 12);
    const long centred = c > 6 ? c - 12 : c;
    EXPECT_EQ(cs.tainted(i), centred >= -2 && centred <= 2) << i;
  }
}

TEST(Coupling, RejectsBadParameters) {
  RandomSource rng(3);
  EXPECT_THROW(init_coupled(24, 2, 1, rng), ParameterError);
  EXPECT_THROW(init_coupled(25, 6, 1, rng), ParameterError);
}

TEST(Coupling, InitialStateSatisfiesInvariant) {
  RandomSource rng(4);
  const auto cs = init_coupled(120, 12, 2, rng);
  EXPECT_EQ(neighbourhood_violations_full(cs), 0u);
  EXPECT_EQ(cs.cycle().labeling().str(), cs.rings().labeling().str());
}

TEST(Coupling, InitialReportSitsOnTheExpectation) {
  RandomSource rng(5);
  const auto cs = init_coupled(6000, 60, 2, rng);
  const auto r = taint_report(cs);
  EXPECT_EQ(r.t, 0u);
  EXPECT_EQ(r.d, 300u);
  EXPECT_DOUBLE_EQ(r.expectation_bound, 300.0);
  EXPECT_TRUE(r.within_bound);
}

TEST(Coupling, GrowthAndMonotonicity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomSource rng(seed);
    const int w = 1 + static_cast<int>(seed % 3);
    auto cs = init_coupled(240, 12, w, rng);
    std::size_t last = cs.taint_count();
    for (int step = 0; step < 2000; ++step) {
      coupled_step(cs, rng);
      const auto d = cs.taint_count();
      ASSERT_GE(d, last);
      ASSERT_LE(d - last, static_cast<std::size_t>(6 * w));
      ASSERT_EQ(cs.last_growth(), d - last);
      last = d;
    }
  }
}

TEST(Coupling, UntaintedProposalsActIdentically) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomSource rng(10 + seed);
    auto cs = init_coupled(180, 12, 2, rng, TaintSeed::crossing_windows);
    for (int step = 0; step < 3000; ++step) {
      const auto [a, b] = rng.distinct_pair(cs.n());
      const bool clean = !cs.tainted(a) && !cs.tainted(b);
      const auto before = cs.taint_count();
      const auto [ec, eg] = cs.step(a, b);
      if (clean) {
        ASSERT_EQ(ec.kind, eg.kind);
        ASSERT_EQ(cs.taint_count(), before);
      }
    }
  }
}

TEST(Coupling, InvariantExhaustiveWithCrossingSeed) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomSource rng(20 + seed);
    auto cs = init_coupled(200, 20, 2, rng, TaintSeed::crossing_windows);
    for (int step = 0; step < 4000; ++step) {
      coupled_step(cs, rng);
      ASSERT_EQ(neighbourhood_violations_full(cs), 0u) << "seed " << seed << " step " << step;
    }
  }
}

TEST(Coupling, CheapCheckMatchesFullScan) {
  for (auto seed_rule : {TaintSeed::inner_classes, TaintSeed::crossing_windows}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      RandomSource rng(30 + seed);
      auto cs = init_coupled(120, 12, 2, rng, seed_rule);
      for (int step = 0; step < 3000; ++step) {
        coupled_step(cs, rng);
        ASSERT_EQ(neighbourhood_violations(cs), neighbourhood_violations_full(cs));
      }
      for (std::size_t i = 0; i < cs.n(); ++i)
        ASSERT_EQ(cs.differing().contains(i), cs.cycle().mark(i) != cs.rings().mark(i));
    }
  }
}

TEST(Coupling, InnerSeedMissesTheLastCrossingClass) {
  // n = 12, L = 6, w = 1. Site 5 is untainted under the inner-class seeding, but
  // its window is {4,5,6} on the cycle and {4,5,0} on the rings.
  const auto lab = Labeling::parse("xxxxoxoxoxoo");
  CoupledState inner(lab, 6, 1, TaintSeed::inner_classes);
  ASSERT_FALSE(inner.tainted(5));
  ASSERT_FALSE(inner.tainted(8));
  EXPECT_TRUE(inner.cycle().unhappy_at(5));
  EXPECT_FALSE(inner.rings().unhappy_at(5));
  const auto [ec, eg] = inner.step(5, 8);
  EXPECT_TRUE(ec.is_swap());
  EXPECT_FALSE(eg.is_swap());
  EXPECT_GT(neighbourhood_violations_full(inner), 0u);

  CoupledState fixed(lab, 6, 1, TaintSeed::crossing_windows);
  ASSERT_TRUE(fixed.tainted(5));
  fixed.step(5, 8);
  EXPECT_EQ(neighbourhood_violations_full(fixed), 0u);
}

TEST(Coupling, SampledCheckFindsNothingWhenClean) {
  RandomSource rng(40);
  auto cs = init_coupled(6000, 60, 2, rng, TaintSeed::crossing_windows);
  for (int step = 0; step < 6000; ++step) coupled_step(cs, rng);
  EXPECT_EQ(neighbourhood_violations_sampled(cs, rng, 2000), 0u);
  EXPECT_EQ(neighbourhood_violations(cs), 0u);
}

TEST(Coupling, BoundGrowsExponentially) {
  RandomSource rng(41);
  auto cs = init_coupled(1200, 60, 2, rng);
  for (int step = 0; step < 1200; ++step) coupled_step(cs, rng);
  const auto r = taint_report(cs);
  EXPECT_EQ(r.t, 1200u);
  EXPECT_NEAR(r.expectation_bound, std::exp(24.0) * 3.0 / 60.0 * 1200.0, 1e-6 * r.expectation_bound);
  EXPECT_DOUBLE_EQ(r.bound, 2.0 * r.expectation_bound);
}
