#pragma once

#include <cstdint>
#include <span>

#include <boost/rational.hpp>

#include "schelling/ring.hpp"

namespace schelling {

using Rational = boost::rational<std::int64_t>;

/// a copies of +1 and b copies of -1.
struct SignMultiset {
  int a = 0;
  int b = 0;
};

namespace detail {

inline void check_multiset(const SignMultiset& m) {
  if (m.a < 0 || m.b < 0 || m.a + m.b < 1)
    throw ParameterError("sign multiset needs a, b >= 0 and a + b >= 1");
}

}  // namespace detail

/// Probability that a uniformly random ordering has every prefix sum
/// strictly positive: max{0, (a-b)/(a+b)}.
inline Rational ballot_probability(const SignMultiset& m) {
  detail::check_multiset(m);
  if (m.a <= m.b) return Rational(0);
  return Rational(m.a - m.b, m.a + m.b);
}

inline constexpr int kBallotEnumerationLimit = 24;

/// The same probability by listing every distinct ordering of the multiset.
inline Rational ballot_enumerate(const SignMultiset& m) {
  detail::check_multiset(m);
  const int len = m.a + m.b;
  if (len > kBallotEnumerationLimit)
    throw ParameterError("ballot enumeration is limited to a + b <= 24");
  std::int64_t good = 0;
  std::int64_t total = 0;
  // Bit k set <=> position k holds +1. Gosper's hack walks every mask with
  // exactly a bits set, i.e. every distinct ordering once.
  const auto score = [&](std::uint32_t mask) {
    ++total;
    int sum = 0;
    for (int k = 0; k < len; ++k) {
      sum += ((mask >> k) & 1u) ? 1 : -1;
      if (sum <= 0) return;
    }
    ++good;
  };
  if (m.a == 0) {
    score(0);
  } else {
    const std::uint32_t limit = 1u << len;
    for (std::uint32_t mask = (1u << m.a) - 1u; mask < limit;) {
      score(mask);
      const std::uint32_t low = mask & (~mask + 1u);
      const std::uint32_t ripple = mask + low;
      mask = ripple | (((ripple ^ mask) >> 2) / low);
    }
  }
  return Rational(good, total);
}

struct CyclicCount {
  int count = 0;
  /// False when the sequence sum is not positive (no shift can be valid).
  bool positive_sum = false;
};

/// Number of cyclic shifts of a +-1 sequence whose prefix sums are all
/// strictly positive. Equals the sequence sum whenever that sum is positive.
inline CyclicCount cyclic_positive_count(std::span<const int> seq) {
  CyclicCount out;
  int total = 0;
  for (int v : seq) {
    if (v != 1 && v != -1) throw ParameterError("cyclic_positive_count needs a +-1 sequence");
    total += v;
  }
  out.positive_sum = total > 0;
  if (!out.positive_sum) return out;
  const std::size_t len = seq.size();
  for (std::size_t shift = 0; shift < len; ++shift) {
    int sum = 0;
    bool ok = true;
    for (std::size_t k = 0; k < len && ok; ++k) {
      sum += seq[(shift + k) % len];
      ok = sum > 0;
    }
    if (ok) ++out.count;
  }
  return out;
}

}  // namespace schelling
