#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

// Independent oracles shared by the unit tests. They work on plain strings and
// vectors so they do not reuse any library code path.
namespace oracle {

inline int sign(char c) { return c == 'x' ? 1 : -1; }

/// Window sum by direct summation on a single cycle.
inline int bias(const std::string& s, int w, std::size_t i) {
  const long n = static_cast<long>(s.size());
  int sum = 0;
  for (long d = -w; d <= w; ++d) sum += sign(s[static_cast<std::size_t>(((static_cast<long>(i) + d) % n + n) % n)]);
  return sum;
}

/// Window sum on disjoint cycles of length L.
inline int ring_bias(const std::string& s, std::size_t L, int w, std::size_t i) {
  const std::size_t base = i / L * L;
  const long pos = static_cast<long>(i - base);
  int sum = 0;
  for (long d = -w; d <= w; ++d) {
    const long j = ((pos + d) % static_cast<long>(L) + static_cast<long>(L)) % static_cast<long>(L);
    sum += sign(s[base + static_cast<std::size_t>(j)]);
  }
  return sum;
}

inline bool unhappy(const std::string& s, int w, std::size_t i) { return sign(s[i]) * bias(s, w, i) < 0; }

/// Upper 0.1% point of the chi-square distribution (Wilson-Hilferty).
inline double chi_square_critical(int df) {
  const double z = 3.090232;
  const double k = df;
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

inline double chi_square(const std::vector<double>& observed, const std::vector<double>& expected) {
  double s = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    s += d * d / expected[i];
  }
  return s;
}

}  // namespace oracle
