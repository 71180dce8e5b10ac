#include <gtest/gtest.h>

#include <map>
#include <set>

#include "schelling/ring.hpp"
#include "schelling/structures.hpp"
#include "test_util.hpp"

using namespace schelling;

namespace {

std::string alternating(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(i % 2 == 0 ? 'x' : 'o');
  return s;
}

std::set<std::size_t> as_set(const IndexedSet& s) {
  return {s.items().begin(), s.items().end()};
}

// Checks the cached state against direct recomputation on the string.
void expect_matches_oracle(const RingState& st) {
  const std::string s = st.labeling().str();
  for (std::size_t i = 0; i < s.size(); ++i) {
    ASSERT_EQ(st.bias(i), oracle::bias(s, st.w(), i)) << "site " << i;
    ASSERT_EQ(st.unhappy_at(i), oracle::unhappy(s, st.w(), i));
  }
}

}  // namespace

TEST(RandomSource, SameSeedSameSequence) {
  RandomSource a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto va = a.next();
    EXPECT_EQ(va, b.next());
    differs = differs || va != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(RandomSource, BelowIsUniform) {
  RandomSource rng(1);
  std::vector<double> counts(7, 0.0);
  for (int i = 0; i < 70000; ++i) counts[rng.below(7)] += 1.0;
  EXPECT_LT(oracle::chi_square(counts, std::vector<double>(7, 10000.0)), oracle::chi_square_critical(6));
}

TEST(RandomSource, GeometricMean) {
  RandomSource rng(3);
  const double p = 0.01;
  double sum = 0.0;
  const int trials = 200000;
  for (int i = 0; i < trials; ++i) sum += static_cast<double>(rng.geometric_failures(p));
  const double mean = sum / trials;
  const double expected = (1.0 - p) / p;
  const double se = std::sqrt((1.0 - p) / (p * p) / trials);
  EXPECT_NEAR(mean, expected, 4.0 * se);
  EXPECT_EQ(rng.geometric_failures(1.0), 0u);
}

TEST(Labeling, ParseRejectsOtherCharacters) {
  EXPECT_THROW(Labeling::parse("xo?x"), ParameterError);
  EXPECT_EQ(Labeling::parse("XoO").str(), "xoo");
}

TEST(InitRandom, ReproducibleFromSeed) {
  RandomSource a(2024), b(2024);
  const auto s1 = init_random(8, 1, a);
  const auto s2 = init_random(8, 1, b);
  EXPECT_EQ(s1.labeling(), s2.labeling());
  EXPECT_TRUE(s1.consistent());
}

TEST(InitRandom, RejectsSmallRings) {
  RandomSource rng(1);
  EXPECT_THROW(init_random(7, 3, rng), ParameterError);
  EXPECT_THROW(init_random(10, 0, rng), ParameterError);
  EXPECT_NO_THROW(init_random(8, 3, rng));
}

TEST(InitRandom, SitesAreFairCoins) {
  RandomSource rng(99);
  const auto st = init_random(200000, 2, rng);
  const double frac = static_cast<double>(st.count(Mark::x)) / 200000.0;
  EXPECT_NEAR(frac, 0.5, 4.0 * std::sqrt(0.25 / 200000.0));
}

TEST(RingState, AllXHasMaximalBiasAndNoUnhappy) {
  for (int w : {1, 2, 5}) {
    const auto st = RingState::from_string(std::string(2 * w + 4, 'x'), w);
    for (std::size_t i = 0; i < st.n(); ++i) EXPECT_EQ(st.bias(i), 2 * w + 1);
    EXPECT_TRUE(st.unhappy(Mark::x).empty());
    EXPECT_TRUE(st.unhappy(Mark::o).empty());
  }
}

TEST(RingState, AlternatingIsEverywhereUnhappy) {
  const auto st = RingState::from_string(alternating(10), 1);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(st.bias(i), st.mark(i) == Mark::x ? -1 : 1);
  EXPECT_EQ(st.unhappy_count(), 10u);
}

TEST(ComputeBias, WindowSumExample) {
  const auto lab = Labeling::parse("xoooxxox");
  EXPECT_EQ(compute_bias(lab, 1, 0), 1);
  EXPECT_EQ(compute_bias(lab, 1, 0), oracle::bias("xoooxxox", 1, 0));
  EXPECT_THROW(compute_bias(lab, 1, 8), ParameterError);
}

TEST(ComputeBias, SixSiteExample) {
  const auto st = RingState::from_string("xoxooo", 1);
  const std::vector<int> expected{-1, 1, -1, -1, -3, -1};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(st.bias(i), expected[i]);
  EXPECT_EQ(as_set(st.unhappy(Mark::x)), (std::set<std::size_t>{0, 2}));
  EXPECT_EQ(as_set(st.unhappy(Mark::o)), (std::set<std::size_t>{1}));
}

TEST(Propose, FrozenStateOnlyNullProposals) {
  auto st = RingState::from_string("xxxxxxxxoo", 2);
  ASSERT_TRUE(st.unhappy(Mark::x).empty());
  RandomSource rng(5);
  for (int k = 0; k < 1000; ++k) EXPECT_FALSE(propose_faithful(st, rng).is_swap());
  EXPECT_EQ(st.proposals(), 1000u);
  EXPECT_EQ(st.swaps(), 0u);
}

TEST(Propose, ForcedSwapFreezes) {
  auto st = RingState::from_string("xoxooo", 1);
  const auto ev = st.propose(2, 1);
  EXPECT_TRUE(ev.is_swap());
  EXPECT_EQ(ev.step, 1u);
  EXPECT_EQ(st.labeling().str(), "xxoooo");
  EXPECT_EQ(st.unhappy_count(), 0u);
  EXPECT_TRUE(is_frozen(st));
  expect_matches_oracle(st);
}

TEST(Propose, RejectsHappyOrSameMark) {
  auto st = RingState::from_string("xoxooo", 1);
  EXPECT_FALSE(st.propose(0, 2).is_swap());  // same mark
  EXPECT_FALSE(st.propose(2, 3).is_swap());  // site 3 is happy
  EXPECT_EQ(st.labeling().str(), "xoxooo");
  EXPECT_EQ(st.proposals(), 2u);
}

TEST(Propose, CacheCoherentOverManySteps) {
  RandomSource rng(11);
  for (int w : {1, 2, 3}) {
    auto st = init_random(40, w, rng);
    const std::size_t nx = st.count(Mark::x);
    for (int k = 0; k < 10000 && !st.frozen(); ++k) {
      propose_faithful(st, rng);
      ASSERT_TRUE(st.consistent());
      ASSERT_EQ(st.count(Mark::x), nx);
      long sum = 0;
      for (std::size_t i = 0; i < st.n(); ++i) {
        ASSERT_NE(st.bias(i) % 2, 0);
        sum += st.bias(i);
      }
      ASSERT_EQ(sum, (2 * w + 1) * (static_cast<long>(nx) - static_cast<long>(st.n() - nx)));
    }
    expect_matches_oracle(st);
  }
}

TEST(Propose, IncrementalMatchesOracleOnRings) {
  RandomSource rng(12);
  auto st = init_random_rings(60, 6, 2, rng);
  for (int k = 0; k < 5000 && !st.frozen(); ++k) {
    step_accelerated(st, rng);
    const std::string s = st.labeling().str();
    for (std::size_t i = 0; i < s.size(); ++i) ASSERT_EQ(st.bias(i), oracle::ring_bias(s, 6, 2, i));
    ASSERT_TRUE(st.consistent());
  }
}

TEST(StepAccelerated, UniquePairAlwaysSwaps) {
  RandomSource rng(1);
  auto s2 = RingState::from_string("xxxxoxoooo", 1);
  ASSERT_EQ(s2.unhappy(Mark::x).size(), 1u);
  ASSERT_EQ(s2.unhappy(Mark::o).size(), 1u);
  const auto ev = step_accelerated(s2, rng);
  EXPECT_TRUE(ev.is_swap());
  EXPECT_GE(s2.proposals(), 1u);
}

TEST(StepAccelerated, FrozenIsAnError) {
  auto st = RingState::from_string("xxxxoooo", 1);
  RandomSource rng(1);
  EXPECT_THROW(step_accelerated(st, rng), FrozenError);
}

TEST(StepAccelerated, PartnerOfSiteOneIsUniform) {
  double to0 = 0, to2 = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    auto st = RingState::from_string("xoxooo", 1);
    RandomSource rng(seed);
    const auto ev = step_accelerated(st, rng);
    ASSERT_TRUE(ev.is_swap());
    const std::size_t partner = ev.site_a == 1 ? ev.site_b : ev.site_a;
    (partner == 0 ? to0 : to2) += 1.0;
  }
  EXPECT_LT(oracle::chi_square({to0, to2}, {5000.0, 5000.0}), oracle::chi_square_critical(1));
}

TEST(StepAccelerated, SkipCountIsGeometricWithEffectiveRate) {
  // |Ux| = 2, |Uo| = 1, n = 6: p = 2*2*1/30.
  double sum = 0.0;
  const int trials = 40000;
  for (int k = 0; k < trials; ++k) {
    auto st = RingState::from_string("xoxooo", 1);
    RandomSource rng(static_cast<std::uint64_t>(k), 1);
    step_accelerated(st, rng);
    sum += static_cast<double>(st.proposals() - 1);
  }
  const double p = 4.0 / 30.0;
  const double se = std::sqrt((1.0 - p) / (p * p) / trials);
  EXPECT_NEAR(sum / trials, (1.0 - p) / p, 4.0 * se);
}

TEST(ModeEquivalence, EffectiveLiteralProposalsAreUniformOverUnhappyPairs) {
  const auto base = RingState::from_string("xoxxoooxxo", 1);
  std::map<std::pair<std::size_t, std::size_t>, double> counts;
  for (std::size_t a : base.unhappy(Mark::x).items())
    for (std::size_t b : base.unhappy(Mark::o).items()) counts[{a, b}] = 0.0;
  ASSERT_GE(counts.size(), 2u);
  RandomSource rng(17);
  double effective = 0.0;
  for (int k = 0; k < 400000; ++k) {
    auto [a, b] = rng.distinct_pair(base.n());
    if (base.mark(a) == Mark::o) std::swap(a, b);
    if (base.mark(a) == Mark::x && base.mark(b) == Mark::o && base.unhappy_at(a) && base.unhappy_at(b)) {
      counts[{a, b}] += 1.0;
      effective += 1.0;
    }
  }
  std::vector<double> obs, exp;
  for (const auto& [k, v] : counts) {
    obs.push_back(v);
    exp.push_back(effective / static_cast<double>(counts.size()));
  }
  EXPECT_LT(oracle::chi_square(obs, exp), oracle::chi_square_critical(static_cast<int>(obs.size()) - 1));
}

TEST(ModeEquivalence, RelevantDrawIsUniformOverRelevantPairs) {
  const auto st = RingState::from_string("xoxxoooxxo", 1);
  std::map<std::pair<std::size_t, std::size_t>, double> counts;
  for (std::size_t a = 0; a < st.n(); ++a)
    for (std::size_t b = a + 1; b < st.n(); ++b)
      if (st.mark(a) != st.mark(b) && (st.unhappy_at(a) || st.unhappy_at(b))) counts[{a, b}] = 0.0;
  ASSERT_DOUBLE_EQ(static_cast<double>(counts.size()), relevant_pair_count(st));
  RandomSource rng(23);
  const int trials = 200000;
  for (int k = 0; k < trials; ++k) {
    const auto d = draw_relevant(st, rng);
    counts.at({std::min(d.a, d.b), std::max(d.a, d.b)}) += 1.0;
  }
  std::vector<double> obs, exp;
  for (const auto& [k, v] : counts) {
    obs.push_back(v);
    exp.push_back(static_cast<double>(trials) / static_cast<double>(counts.size()));
  }
  EXPECT_LT(oracle::chi_square(obs, exp), oracle::chi_square_critical(static_cast<int>(obs.size()) - 1));
}

TEST(ModeEquivalence, FinalRunLengthLawAgrees) {
  // Same jump chain, so the frozen labelings have the same law.
  const int runs = 100000;
  std::map<std::size_t, double> hist[2];
  double total[2] = {0, 0};
  for (int mode = 0; mode < 2; ++mode) {
    for (int k = 0; k < runs; ++k) {
      RandomSource rng(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(mode + 1));
      auto st = init_random(12, 1, rng);
      RunOptions opts = mode == 0 ? RunOptions{Mode::faithful, 0, 0, false} : RunOptions{Mode::accelerated, 0, 0, true};
      const auto rep = run_to_frozen(st, rng, opts);
      ASSERT_TRUE(rep.frozen);
      for (const auto& r : run_lengths(st.labeling()).runs) {
        hist[mode][r.length] += 1.0;
        total[mode] += 1.0;
      }
    }
  }
  std::set<std::size_t> keys;
  for (const auto& h : hist)
    for (const auto& [k, v] : h) keys.insert(k);
  double tv = 0.0;
  for (auto k : keys) tv += std::abs(hist[0][k] / total[0] - hist[1][k] / total[1]);
  EXPECT_LT(tv / 2.0, 0.02);
}

TEST(IsFrozen, Examples) {
  EXPECT_TRUE(is_frozen(RingState::from_string("xxxxxxxx", 1)));
  EXPECT_TRUE(is_frozen(RingState::from_string("xxxxoooo", 1)));
  EXPECT_FALSE(is_frozen(RingState::from_string(alternating(8), 1)));
}

TEST(RunToFrozen, InitiallyFrozen) {
  auto st = RingState::from_string("xxxxoooo", 1);
  RandomSource rng(1);
  const auto rep = run_to_frozen(st, rng, RunOptions::accelerated_defaults());
  EXPECT_EQ(rep.swaps, 0u);
  EXPECT_TRUE(rep.frozen);
  EXPECT_FALSE(rep.budget_exhausted);
}

TEST(RunToFrozen, AcceleratedRunsFreezeWithinBudget) {
  int frozen = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomSource rng(seed, 77);
    auto st = init_random(2000, 3, rng);
    const auto rep = run_to_frozen(st, rng, RunOptions{Mode::accelerated, 100'000'000ULL, 0, true});
    frozen += rep.frozen ? 1 : 0;
  }
  EXPECT_GE(frozen, 99);
}

TEST(RunToFrozen, BudgetIsReportedNotThrown) {
  RandomSource rng(8);
  auto st = init_random(500, 2, rng);
  const auto rep = run_to_frozen(st, rng, RunOptions{Mode::faithful, 10, 0, false});
  EXPECT_TRUE(rep.budget_exhausted);
  EXPECT_EQ(rep.proposals, 10u);
}

TEST(RunToFrozen, SwapReplayConservesMarks) {
  RandomSource rng(31);
  auto st = init_random(300, 2, rng);
  EventLog log;
  run_to_frozen(st, rng, RunOptions::accelerated_defaults(), {&log});
  std::string s = log.initial().str();
  std::size_t o_left = 0, x_entered = 0;
  for (const auto& ev : log.events()) {
    ASSERT_NE(s[ev.site_a], s[ev.site_b]);
    for (std::size_t site : {ev.site_a, ev.site_b}) {
      if (s[site] == 'o') {
        ++o_left;
        ++x_entered;  // the partner is an x moving in
      }
    }
    ASSERT_TRUE(oracle::unhappy(s, 2, ev.site_a));
    ASSERT_TRUE(oracle::unhappy(s, 2, ev.site_b));
    std::swap(s[ev.site_a], s[ev.site_b]);
  }
  EXPECT_EQ(o_left, x_entered);
  EXPECT_EQ(o_left, log.events().size());
  EXPECT_EQ(s, st.labeling().str());
}

TEST(RunToFrozen, FrozenIsAbsorbing) {
  RandomSource rng(4);
  auto st = init_random(200, 2, rng);
  run_to_frozen(st, rng, RunOptions::accelerated_defaults());
  ASSERT_TRUE(st.frozen());
  const auto before = st.labeling();
  for (int k = 0; k < 5000; ++k) propose_faithful(st, rng);
  EXPECT_EQ(st.labeling(), before);
  EXPECT_TRUE(st.frozen());
}

TEST(RunToFrozen, SkipInertFaithfulAgreesWithLiteralOnAverage) {
  // Both faithful variants share the law of the observed proposals; compare
  // the mean number of proposals to freeze.
  double mean[2] = {0, 0};
  const int runs = 3000;
  for (int v = 0; v < 2; ++v) {
    for (int k = 0; k < runs; ++k) {
      RandomSource rng(static_cast<std::uint64_t>(k), 100 + static_cast<std::uint64_t>(v));
      auto st = init_random(16, 1, rng);
      const auto rep = run_to_frozen(st, rng, RunOptions{Mode::faithful, 0, 0, v == 1});
      mean[v] += static_cast<double>(rep.proposals) / runs;
    }
  }
  EXPECT_NEAR(mean[0] / mean[1], 1.0, 0.06);
}
