#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <boost/rational.hpp>

#include "schelling/ring.hpp"

namespace schelling {

using Rational = boost::rational<std::int64_t>;

/// Adjacent sites [start, start + length) on a ring of size n (indices wrap).
struct Block {
  std::size_t start = 0;
  std::size_t length = 0;

  std::size_t site(std::size_t k, std::size_t n) const noexcept { return (start + k) % n; }
  std::size_t last(std::size_t n) const noexcept { return (start + length - 1) % n; }

  /// True if site s lies in the block on a ring of size n.
  bool contains(std::size_t s, std::size_t n) const noexcept {
    return (s + n - start) % n < length;
  }

  bool operator==(const Block&) const = default;
};

/// The block extended by w sites on each side.
inline Block pad(const Block& b, int w, std::size_t n) {
  const auto ww = static_cast<std::size_t>(w);
  return Block{(b.start + n - ww % n) % n, std::min(n, b.length + 2 * ww)};
}

struct Run {
  std::size_t start = 0;
  std::size_t length = 0;
  Mark mark = Mark::x;
};

/// Circular maximal-run decomposition of a labeling.
struct RunStats {
  std::size_t n = 0;
  std::vector<Run> runs;

  std::size_t run_count() const noexcept { return runs.size(); }
  Rational mean_run() const {
    return Rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(runs.size()));
  }
  double mean_run_value() const { return boost::rational_cast<double>(mean_run()); }

  /// Fraction of sites that sit in a run strictly longer than `threshold` sites.
  double tail_fraction(double threshold) const {
    std::size_t in_tail = 0;
    for (const auto& r : runs)
      if (static_cast<double>(r.length) > threshold) in_tail += r.length;
    return static_cast<double>(in_tail) / static_cast<double>(n);
  }

  /// tail_fraction(lambda * w^2) for each lambda.
  std::vector<double> tail_profile(int w, std::span<const double> lambdas) const {
    std::vector<double> out;
    out.reserve(lambdas.size());
    for (double lambda : lambdas) out.push_back(tail_fraction(lambda * w * w));
    return out;
  }
};

inline RunStats run_lengths(const Labeling& labeling) {
  RunStats stats;
  const std::size_t n = labeling.size();
  stats.n = n;
  if (n == 0) return stats;
  // Start at a run boundary so no run is split by the wrap-around.
  std::size_t origin = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (labeling[i] != labeling[(i + n - 1) % n]) {
      origin = i;
      break;
    }
  }
  if (origin == n) {
    stats.runs.push_back({0, n, labeling[0]});
    return stats;
  }
  Run current{origin, 1, labeling[origin]};
  for (std::size_t k = 1; k < n; ++k) {
    const std::size_t s = (origin + k) % n;
    if (labeling[s] == current.mark) {
      ++current.length;
    } else {
      stats.runs.push_back(current);
      current = Run{s, 1, labeling[s]};
    }
  }
  stats.runs.push_back(current);
  return stats;
}

struct FirewallCensus {
  std::size_t x_firewalls = 0;
  std::size_t o_firewalls = 0;
  std::size_t members = 0;

  bool operator==(const FirewallCensus&) const = default;
};

/// Firewalls are maximal runs of length >= w+1. `members` is the potential
/// counting individuals living inside firewalls.
inline FirewallCensus firewall_census(const RunStats& stats, int w) {
  FirewallCensus c;
  for (const auto& r : stats.runs) {
    if (r.length < static_cast<std::size_t>(w) + 1) continue;
    (r.mark == Mark::x ? c.x_firewalls : c.o_firewalls) += 1;
    c.members += r.length;
  }
  return c;
}

inline FirewallCensus firewall_census(const Labeling& labeling, int w) {
  return firewall_census(run_lengths(labeling), w);
}

/// True if site i belongs to a maximal run of length >= w+1.
inline bool in_firewall(const Labeling& labeling, int w, std::size_t i) {
  const auto n = static_cast<std::ptrdiff_t>(labeling.size());
  const Mark m = labeling[i];
  std::ptrdiff_t len = 1;
  const auto ii = static_cast<std::ptrdiff_t>(i);
  for (std::ptrdiff_t d = 1; d < n && len <= w && labeling.at(ii - d) == m; ++d) ++len;
  for (std::ptrdiff_t d = 1; d < n && len <= w && labeling.at(ii + d) == m; ++d) ++len;
  return len >= w + 1;
}

namespace detail {

// c > k*sqrt(w) for integers, evaluated exactly.
inline bool exceeds_sqrt_multiple(long c, long k, long w) { return c > 0 && c * c > k * k * w; }
// c >= k*sqrt(w).
inline bool reaches_sqrt_multiple(long c, long k, long w) { return c >= 0 && c * c >= k * k * w; }

}  // namespace detail

/// Block of exactly w marks with total >= 5 sqrt(w) and every prefix and
/// suffix sum > -2 sqrt(w). Promotion toward `m` (x by default).
inline bool is_promoting(std::span<const Mark> block, int w, Mark toward = Mark::x) {
  if (block.size() != static_cast<std::size_t>(w))
    throw ParameterError("promoting test needs a block of exactly w sites");
  const int s = sign_of(toward);
  std::vector<long> prefix(block.size() + 1, 0);
  for (std::size_t k = 0; k < block.size(); ++k) prefix[k + 1] = prefix[k] + s * sign_of(block[k]);
  const long total = prefix.back();
  if (!detail::reaches_sqrt_multiple(total, 5, w)) return false;
  for (std::size_t j = 1; j <= block.size(); ++j) {
    const long head = prefix[j];
    const long tail = total - prefix[block.size() - j];
    // x > -2 sqrt(w)  <=>  not (-x >= 2 sqrt(w))
    if (detail::reaches_sqrt_multiple(-head, 2, w)) return false;
    if (detail::reaches_sqrt_multiple(-tail, 2, w)) return false;
  }
  return true;
}

inline bool is_x_promoting(std::span<const Mark> block, int w) {
  return is_promoting(block, w, Mark::x);
}

inline bool is_o_promoting(std::span<const Mark> block, int w) {
  return is_promoting(block, w, Mark::o);
}

/// A firewall incubator F = D_L I D_R with its flanking attacker blocks.
struct Incubator {
  Mark type = Mark::x;
  Block left_defender;
  Block internal;
  Block right_defender;
  Block left_attacker;
  Block right_attacker;
  int left_bias = 0;   // time-0 bias at the left endpoint of D_L
  int right_bias = 0;  // time-0 bias at the right endpoint of D_R

  Block region() const {
    return Block{left_defender.start,
                 left_defender.length + internal.length + right_defender.length};
  }
};

enum class IncubatorSearch { maximal, exhaustive };

namespace detail {

inline Block span_block(std::size_t start, std::size_t first, std::size_t last, std::size_t n) {
  return Block{(start + first) % n, last + 1 - first};
}

inline Incubator make_incubator(Mark type, std::size_t origin, std::size_t l, std::size_t r,
                                int w, std::size_t n, std::span<const int> raw_bias) {
  const auto ww = static_cast<std::size_t>(w);
  Incubator inc;
  inc.type = type;
  inc.left_defender = Block{(origin + l) % n, ww + 1};
  inc.right_defender = Block{(origin + r - ww) % n, ww + 1};
  inc.internal = Block{(origin + l + ww + 1) % n, r - l + 1 - 2 * (ww + 1)};
  inc.left_attacker = Block{(origin + n + l - ww) % n, ww};
  inc.right_attacker = Block{(origin + r + 1) % n, ww};
  inc.left_bias = raw_bias[l];
  inc.right_bias = raw_bias[r];
  return inc;
}

}  // namespace detail

/// Incubators of both types whose region F lies inside `range`, judged on
/// the biases of `labeling` (the time-0 configuration).
///
/// Maximal mode reports, for each maximal stretch of strongly biased sites,
/// the incubator with the leftmost admissible left endpoint and the rightmost
/// admissible right endpoint, so the reported incubators never overlap.
/// Endpoint minima accept ties.
inline std::vector<Incubator> find_incubators(const Labeling& labeling, int w, const Block& range,
                                              IncubatorSearch mode = IncubatorSearch::maximal) {
  const std::size_t n = labeling.size();
  const auto topo = Topology::cycle(n);
  validate_parameters(topo, w);
  const std::size_t len = std::min(range.length, n);
  const auto ww = static_cast<std::size_t>(w);
  std::vector<Incubator> out;
  if (len < 2 * (ww + 1)) return out;

  std::vector<int> raw(len);
  for (std::size_t p = 0; p < len; ++p) raw[p] = compute_bias(labeling, topo, w, range.site(p, n));

  for (Mark type : {Mark::x, Mark::o}) {
    const int s = sign_of(type);
    std::vector<int> b(len);
    std::vector<char> good(len);
    for (std::size_t p = 0; p < len; ++p) {
      b[p] = s * raw[p];
      good[p] = detail::exceeds_sqrt_multiple(b[p], 1, w);
    }
    std::size_t p = 0;
    while (p < len) {
      if (!good[p]) {
        ++p;
        continue;
      }
      std::size_t end = p;  // segment [p, end)
      while (end < len && good[end]) ++end;
      if (end - p >= 2 * (ww + 1)) {
        std::vector<std::size_t> lefts, rights;
        for (std::size_t l = p; l + ww < end; ++l) {
          if (std::all_of(b.begin() + l, b.begin() + l + ww + 1, [&](int v) { return b[l] <= v; }))
            lefts.push_back(l);
        }
        for (std::size_t r = p + ww; r < end; ++r) {
          if (std::all_of(b.begin() + r - ww, b.begin() + r + 1, [&](int v) { return b[r] <= v; }))
            rights.push_back(r);
        }
        if (mode == IncubatorSearch::exhaustive) {
          for (auto l : lefts)
            for (auto r : rights)
              if (r >= l + 2 * ww + 1)
                out.push_back(detail::make_incubator(type, range.start, l, r, w, n, raw));
        } else if (!lefts.empty() && !rights.empty() && rights.back() >= lefts.front() + 2 * ww + 1) {
          out.push_back(
              detail::make_incubator(type, range.start, lefts.front(), rights.back(), w, n, raw));
        }
      }
      p = end;
    }
  }
  return out;
}

inline std::vector<Incubator> find_incubators(const Labeling& labeling, int w,
                                              IncubatorSearch mode = IncubatorSearch::maximal) {
  return find_incubators(labeling, w, Block{0, labeling.size()}, mode);
}

/// True if every site of F carries the incubator's mark.
inline bool region_is_firewall(const Labeling& labeling, const Incubator& inc) {
  const Block f = inc.region();
  for (std::size_t k = 0; k < f.length; ++k)
    if (labeling[f.site(k, labeling.size())] != inc.type) return false;
  return true;
}

}  // namespace schelling
