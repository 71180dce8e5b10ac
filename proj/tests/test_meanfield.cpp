#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <tuple>
#include <vector>

#include "schelling/meanfield.hpp"
#include "test_util.hpp"

using namespace schelling;
using namespace schelling::meanfield;

namespace {

std::string rotated(const std::string& s, std::size_t k) { return s.substr(k) + s.substr(0, k); }

// Drift written straight from the coefficient definition on strings: for
// every node j of sigma', every partner sigma'' and every target sigma.
std::vector<double> drift_oracle(const StateVector& z) {
  const int L = z.L, w = z.w;
  const std::size_t count = std::size_t{1} << L;
  std::vector<std::string> str(count);
  for (std::size_t c = 0; c < count; ++c) str[c] = code_to_string(static_cast<Code>(c), L);
  std::vector<double> f(count, 0.0);
  for (std::size_t s1 = 0; s1 < count; ++s1)
    for (std::size_t s2 = 0; s2 < count; ++s2)
      for (int j = 0; j < L; ++j) {
        const auto& a = str[s1];
        const auto& b = str[s2];
        const auto jj = static_cast<std::size_t>(j);
        if (a[jj] == b[0]) continue;
        if (!oracle::unhappy(a, w, jj) || !oracle::unhappy(b, w, 0)) continue;
        std::string after = a;
        after[jj] = b[0];
        f[s1] -= 2.0 * z.z[s1] * z.z[s2];
        f[string_to_code(after)] += 2.0 * z.z[s1] * z.z[s2];
      }
  return f;
}

StateVector random_vector(int L, int w, RandomSource& rng) {
  StateVector v(L, w);
  double s = 0.0;
  for (auto& x : v.z) s += (x = rng.uniform());
  for (auto& x : v.z) x /= s;
  return v;
}

StateVector symmetrised(const StateVector& v) {
  const auto iv = swap_symmetry(v);
  StateVector out = v;
  for (std::size_t c = 0; c < v.size(); ++c) out.z[c] = 0.5 * (v.z[c] + iv.z[c]);
  return out;
}

}  // namespace

TEST(Encoding, StringRoundTrip) {
  EXPECT_EQ(string_to_code("xoxo"), 5u);
  EXPECT_EQ(code_to_string(5, 4), "xoxo");
  EXPECT_EQ(rotate(string_to_code("xxoo"), 4, 1), string_to_code("xoox"));
  EXPECT_EQ(complement(string_to_code("xxoo"), 4), string_to_code("ooxx"));
  for (Code c = 0; c < 64; ++c)
    for (int s = 0; s < 6; ++s)
      EXPECT_EQ(code_to_string(rotate(c, 6, s), 6), rotated(code_to_string(c, 6), static_cast<std::size_t>(s)));
}

TEST(Encoding, UnhappyIndicator) {
  EXPECT_EQ(unhappy_indicator(string_to_code("xxxx"), 4, 1), 0);
  EXPECT_EQ(unhappy_indicator(string_to_code("xoxo"), 4, 1), 1);
  EXPECT_EQ(unhappy_indicator(string_to_code("oxox"), 4, 1), -1);
  for (Code c = 0; c < 256; ++c) {
    const auto s = code_to_string(c, 8);
    const int want = oracle::unhappy(s, 2, 0) ? oracle::sign(s[0]) : 0;
    EXPECT_EQ(unhappy_indicator(c, 8, 2), want);
  }
}

TEST(StateVectorTest, MonochromaticRings) {
  const auto v = empirical_state_vector(Labeling::parse(std::string(24, 'x')), 6, 2);
  EXPECT_EQ(v.z[string_to_code("xxxxxx")], 1.0);
  EXPECT_EQ(v.sum(), 1.0);
}

TEST(StateVectorTest, RotationCounting) {
  const auto v = empirical_state_vector(Labeling::parse("xoxo"), 4, 1);
  EXPECT_DOUBLE_EQ(v.z[string_to_code("xoxo")], 0.5);
  EXPECT_DOUBLE_EQ(v.z[string_to_code("oxox")], 0.5);
}

TEST(StateVectorTest, ConstructionIdentities) {
  RandomSource rng(3);
  const auto lab = Labeling::uniform(1200, rng);
  const auto counts = empirical_counts(lab, 6);
  std::uint64_t total = 0;
  std::map<Code, std::uint64_t> classes;
  for (Code c = 0; c < 64; ++c) {
    total += counts[c];
    Code rep = c;
    for (int s = 1; s < 6; ++s) rep = std::min(rep, rotate(c, 6, s));
    classes[rep] += counts[c];
  }
  EXPECT_EQ(total, 1200u);
  for (const auto& [rep, mass] : classes) EXPECT_EQ(mass % 6, 0u) << rep;
  EXPECT_NEAR(empirical_state_vector(lab, 6, 2).sum(), 1.0, 1e-12);
  EXPECT_THROW(empirical_counts(Labeling::uniform(100, rng), 6), ParameterError);
}

TEST(StateVectorTest, DeltaMatchesUnhappyCounts) {
  RandomSource rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = trial % 2 == 0 ? 6 : 8;
    const int w = trial % 3 == 0 ? 1 : 2;
    auto st = init_random_rings(L * (50 + rng.below(50)), L, w, rng);
    run_to_frozen(st, rng, RunOptions{Mode::faithful, rng.below(2000), 0, true});
    const auto counts = empirical_counts(st.labeling(), static_cast<int>(L));
    long long signed_count = 0;
    for (Code c = 0; c < counts.size(); ++c)
      signed_count += unhappy_indicator(c, static_cast<int>(L), w) * static_cast<long long>(counts[c]);
    const auto ux = static_cast<long long>(st.unhappy(Mark::x).size());
    const auto uo = static_cast<long long>(st.unhappy(Mark::o).size());
    EXPECT_EQ(signed_count, ux - uo);
    EXPECT_NEAR(delta(empirical_state_vector(st)) * static_cast<double>(st.n()), static_cast<double>(ux - uo), 1e-9);
  }
}

TEST(DriftTableTest, MonochromaticHasNoEntries) {
  const auto t = build_drift_table(4, 1);
  const Code all_x = string_to_code("xxxx");
  t.for_each_entry([&](int, Code, Code from, Code partner, int) {
    EXPECT_NE(from, all_x);
    EXPECT_NE(partner, all_x);
  });
}

TEST(DriftTableTest, HandEntry) {
  const auto t = build_drift_table(4, 1);
  std::map<Code, int> a;
  t.for_each_entry([&](int j, Code sigma, Code from, Code partner, int coeff) {
    if (j == 1 && from == string_to_code("xoxo") && partner == string_to_code("oxox")) a[sigma] += coeff;
  });
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[string_to_code("xoxo")], -1);
  EXPECT_EQ(a[string_to_code("ooxo")], 1);
}

TEST(DriftTableTest, CoefficientsConserveMass) {
  for (auto [L, w] : {std::pair{4, 1}, {6, 2}, {7, 3}}) {
    const auto t = build_drift_table(L, w);
    std::map<std::tuple<int, Code, Code>, int> sum;
    std::size_t entries = 0;
    t.for_each_entry([&](int j, Code, Code from, Code partner, int a) {
      sum[{j, from, partner}] += a;
      ++entries;
    });
    EXPECT_EQ(entries, t.entry_count());
    for (const auto& [key, s] : sum) EXPECT_EQ(s, 0);
  }
}

TEST(DriftTableTest, EffectiveOnlyForUnhappyOpposites) {
  const int L = 6, w = 2;
  const auto t = build_drift_table(L, w);
  t.for_each_entry([&](int j, Code, Code from, Code partner, int) {
    const auto a = code_to_string(from, L), b = code_to_string(partner, L);
    const auto jj = static_cast<std::size_t>(j - 1);
    EXPECT_NE(a[jj], b[0]);
    EXPECT_TRUE(oracle::unhappy(a, w, jj));
    EXPECT_TRUE(oracle::unhappy(b, w, 0));
  });
}

TEST(DriftTableTest, ResourceGuard) {
  EXPECT_THROW(build_drift_table(11, 2), ParameterError);
  EXPECT_NO_THROW(build_drift_table(11, 2, 11));
  EXPECT_THROW(build_drift_table(4, 2), ParameterError);
}

TEST(Drift, MatchesDefinitionOracle) {
  RandomSource rng(5);
  for (auto [L, w] : {std::pair{4, 1}, {5, 2}, {6, 1}, {6, 2}}) {
    const auto table = build_drift_table(L, w);
    for (int trial = 0; trial < 5; ++trial) {
      const auto z = random_vector(L, w, rng);
      const auto f = drift(z, table);
      const auto want = drift_oracle(z);
      for (std::size_t c = 0; c < f.size(); ++c) ASSERT_NEAR(f.z[c], want[c], 1e-14);
    }
  }
}

TEST(Drift, ConservesMassAndVanishesOnMonochromatic) {
  RandomSource rng(6);
  const auto table = build_drift_table(6, 2);
  for (int trial = 0; trial < 50; ++trial) EXPECT_NEAR(drift(random_vector(6, 2, rng), table).sum(), 0.0, 1e-12);
  const Code x = string_to_code("xxxxxx"), o = string_to_code("oooooo");
  EXPECT_EQ(drift(StateVector::indicator(6, 2, x), table).z, std::vector<double>(64, 0.0));
  auto mix = StateVector::indicator(6, 2, x);
  mix.z[o] = mix.z[x] = 0.5;
  EXPECT_EQ(drift(mix, table).z, std::vector<double>(64, 0.0));
}

TEST(Drift, MatchesSingleStepMonteCarlo) {
  // Every length-4 labeling once per 64 nodes gives exactly uniform z.
  const int L = 4, w = 1;
  const std::size_t copies = 6250;
  std::string s;
  for (std::size_t k = 0; k < copies; ++k)
    for (Code c = 0; c < 16; ++c) s += code_to_string(c, L);
  const std::size_t n = s.size();
  ASSERT_EQ(n, 400000u);
  const auto z = empirical_state_vector(Labeling::parse(s), L, w);
  for (double v : z.z) ASSERT_DOUBLE_EQ(v, 1.0 / 16.0);
  const auto f = drift(z, build_drift_table(L, w));

  // Per-proposal change of the ring counts, i.e. E[zeta(t+1) - zeta(t)].
  RandomSource rng(7);
  const std::size_t trials = 4'000'000;
  std::vector<double> sum(16, 0.0), sq(16, 0.0), d(16);
  const auto ring_at = [&](const std::string& lab, std::size_t r) { return lab.substr(r * 4, 4); };
  for (std::size_t k = 0; k < trials; ++k) {
    const auto [i, j] = rng.distinct_pair(n);
    if (s[i] == s[j]) continue;
    const std::size_t ri = i / 4, rj = j / 4;
    const auto a = ring_at(s, ri), b = ring_at(s, rj);
    if (!oracle::unhappy(a, w, i % 4) || !oracle::unhappy(b, w, j % 4)) continue;
    std::fill(d.begin(), d.end(), 0.0);
    std::string a2 = a, b2 = b;
    if (ri == rj) {
      std::swap(a2[i % 4], a2[j % 4]);
      b2 = a2;
    } else {
      std::swap(a2[i % 4], b2[j % 4]);
    }
    const auto count = [&](const std::string& ring, double sgn) {
      for (std::size_t r = 0; r < 4; ++r) d[string_to_code(rotated(ring, r))] += sgn;
    };
    count(a, -1.0);
    count(a2, 1.0);
    if (ri != rj) {
      count(b, -1.0);
      count(b2, 1.0);
    }
    for (std::size_t c = 0; c < 16; ++c) {
      sum[c] += d[c];
      sq[c] += d[c] * d[c];
    }
  }
  for (std::size_t c = 0; c < 16; ++c) {
    const double mean = sum[c] / static_cast<double>(trials);
    const double var = sq[c] / static_cast<double>(trials) - mean * mean;
    const double se = std::sqrt(var / static_cast<double>(trials));
    EXPECT_LE(std::abs(mean - f.z[c]), 3.0 * se + 1e-12) << code_to_string(static_cast<Code>(c), 4) << " f=" << f.z[c]
                                                         << " mc=" << mean << " se=" << se;
  }
}

TEST(Symmetry, Involution) {
  RandomSource rng(8);
  const auto v = random_vector(6, 2, rng);
  EXPECT_EQ(swap_symmetry(swap_symmetry(v)).z, v.z);
  EXPECT_EQ(swap_symmetry(v).z[0], v.z[63]);
}

TEST(Symmetry, DriftEquivariance) {
  RandomSource rng(9);
  for (auto [L, w] : {std::pair{4, 1}, {6, 1}, {6, 2}}) {
    const auto table = build_drift_table(L, w);
    for (int trial = 0; trial < 100; ++trial) {
      const auto z = random_vector(L, w, rng);
      EXPECT_LE(sup_distance(swap_symmetry(drift(z, table)), drift(swap_symmetry(z), table)), 1e-12);
    }
  }
}

TEST(Symmetry, DeltaVanishesOnFixedPoints) {
  RandomSource rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = symmetrised(random_vector(6, 2, rng));
    EXPECT_EQ(delta(z), 0.0);
  }
}

TEST(Integrate, ConstantOnMonochromatic) {
  const auto table = build_drift_table(6, 2);
  const auto z0 = StateVector::indicator(6, 2, string_to_code("xxxxxx"));
  const auto traj = integrate(z0, table, 1e-2, 1.0, 10);
  ASSERT_EQ(traj.z.size(), 11u);
  for (const auto& z : traj.z) EXPECT_EQ(z.z, z0.z);
  EXPECT_DOUBLE_EQ(traj.x.back(), 1.0);
}

TEST(Integrate, SymmetricSetIsInvariant) {
  RandomSource rng(11);
  const auto table = build_drift_table(6, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto z0 = symmetrised(random_vector(6, 2, rng));
    const auto traj = integrate(z0, table, 1e-3, 2.0, 20);
    for (const auto& z : traj.z) {
      EXPECT_LE(sup_distance(z, swap_symmetry(z)), 1e-10);
      EXPECT_NEAR(z.sum(), 1.0, 1e-10);
    }
  }
}

TEST(Integrate, FourthOrderConvergence) {
  RandomSource rng(12);
  const auto table = build_drift_table(6, 2);
  const auto z0 = random_vector(6, 2, rng);
  const double pts[] = {1.0};
  const auto at = [&](double h) { return integrate(z0, table, h, pts).z.back(); };
  const auto a = at(0.2), b = at(0.1), c = at(0.05);
  const double ratio = sup_distance(a, b) / sup_distance(b, c);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(Integrate, LandsOnSamplePoints) {
  RandomSource rng(13);
  const auto table = build_drift_table(4, 1);
  const auto z0 = random_vector(4, 1, rng);
  const double pts[] = {0.0, 0.0015, 0.37, 0.37, 1.0};
  const auto traj = integrate(z0, table, 1e-2, pts);
  ASSERT_EQ(traj.x.size(), 5u);
  EXPECT_EQ(traj.z[0].z, z0.z);
  EXPECT_EQ(traj.z[2].z, traj.z[3].z);
}

TEST(Integrate, RejectsBadInput) {
  const auto table = build_drift_table(4, 1);
  auto z0 = StateVector::indicator(4, 1, 0);
  EXPECT_THROW(integrate(z0, table, 0.0, 1.0, 4), ParameterError);
  z0.z[1] = 0.5;
  EXPECT_THROW(integrate(z0, table, 1e-3, 1.0, 4), ParameterError);
  const double back[] = {0.5, 0.25};
  EXPECT_THROW(integrate(StateVector::indicator(4, 1, 0), table, 1e-3, back), ParameterError);
}
