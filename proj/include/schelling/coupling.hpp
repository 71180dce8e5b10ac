#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "schelling/random.hpp"
#include "schelling/ring.hpp"

namespace schelling {

/// Which nodes start tainted.
enum class TaintSeed {
  /// Congruence classes -w+1, ..., w-1 mod L (2w-1 classes).
  inner_classes,
  /// Classes -w, ..., w-1 mod L: every node whose window crosses a ring cut.
  crossing_windows,
};

/// The n-cycle and the disjoint union of n/L cycles of length L driven by
/// one shared proposal stream, with the set of tainted nodes.
class CoupledState {
 public:
  CoupledState(const Labeling& initial, std::size_t ring_length, int w,
               TaintSeed seed = TaintSeed::inner_classes)
      : cycle_(initial, Topology::cycle(initial.size()), w),
        rings_(initial, Topology::disjoint_rings(initial.size(), ring_length), w),
        L_(ring_length),
        seed_(seed),
        tainted_(initial.size(), 0),
        differ_(initial.size()) {
    const auto ww = static_cast<std::ptrdiff_t>(w);
    const auto len = static_cast<std::ptrdiff_t>(L_);
    const std::ptrdiff_t low = seed == TaintSeed::inner_classes ? -ww + 1 : -ww;
    for (std::size_t i = 0; i < initial.size(); ++i) {
      const auto c = static_cast<std::ptrdiff_t>(i % L_);
      const std::ptrdiff_t centred = c >= len / 2 + 1 ? c - len : c;  // in (-L/2, L/2]
      if (centred >= low && centred <= ww - 1) taint(i);
    }
    initial_taint_ = count_;
  }

  const RingState& cycle() const noexcept { return cycle_; }
  const RingState& rings() const noexcept { return rings_; }
  std::size_t n() const noexcept { return cycle_.n(); }
  std::size_t ring_length() const noexcept { return L_; }
  int w() const noexcept { return cycle_.w(); }
  TaintSeed seed() const noexcept { return seed_; }
  std::uint64_t steps() const noexcept { return steps_; }

  bool tainted(std::size_t i) const { return tainted_[i] != 0; }
  std::size_t taint_count() const noexcept { return count_; }
  std::size_t initial_taint() const noexcept { return initial_taint_; }
  /// Nodes tainted by the most recent step.
  std::size_t last_growth() const noexcept { return last_growth_; }
  /// Nodes whose labels currently differ between the two graphs.
  const IndexedSet& differing() const noexcept { return differ_; }

  /// Proposes the pair (a, b) to both processes.
  std::pair<SwapEvent, SwapEvent> step(std::size_t a, std::size_t b) {
    ++steps_;
    const bool spread = tainted(a) || tainted(b);
    auto ev_c = cycle_.propose(a, b);
    auto ev_g = rings_.propose(a, b);
    last_growth_ = 0;
    if (spread) {
      const std::size_t before = count_;
      for (std::size_t s : {a, b}) {
        cycle_.for_each_in_window(s, [&](std::size_t j) { taint(j); });
        rings_.for_each_in_window(s, [&](std::size_t j) { taint(j); });
      }
      last_growth_ = count_ - before;
    }
    for (std::size_t s : {a, b}) {
      if (cycle_.mark(s) != rings_.mark(s)) {
        differ_.insert(s);
      } else {
        differ_.erase(s);
      }
    }
    return {ev_c, ev_g};
  }

 private:
  void taint(std::size_t i) {
    if (tainted_[i]) return;
    tainted_[i] = 1;
    ++count_;
  }

  RingState cycle_;
  RingState rings_;
  std::size_t L_;
  TaintSeed seed_;
  std::vector<char> tainted_;
  std::size_t count_ = 0;
  std::size_t initial_taint_ = 0;
  std::size_t last_growth_ = 0;
  std::uint64_t steps_ = 0;
  IndexedSet differ_;
};

inline CoupledState init_coupled(std::size_t n, std::size_t ring_length, int w, RandomSource& rng,
                                 TaintSeed seed = TaintSeed::inner_classes) {
  validate_parameters(Topology::disjoint_rings(n, ring_length), w);
  validate_parameters(Topology::cycle(n), w);
  return CoupledState(Labeling::uniform(n, rng), ring_length, w, seed);
}

/// One shared uniform proposal.
inline std::pair<SwapEvent, SwapEvent> coupled_step(CoupledState& cs, RandomSource& rng) {
  const auto [a, b] = rng.distinct_pair(cs.n());
  return cs.step(a, b);
}

struct TaintReport {
  std::uint64_t t = 0;
  std::size_t d = 0;
  /// e^{12wt/n} (2w-1)/L n
  double expectation_bound = 0.0;
  /// Twice the expectation bound.
  double bound = 0.0;
  bool within_bound = false;
};

inline TaintReport taint_report(const CoupledState& cs) {
  TaintReport r;
  r.t = cs.steps();
  r.d = cs.taint_count();
  const double n = static_cast<double>(cs.n());
  const double w = cs.w();
  r.expectation_bound = std::exp(12.0 * w * static_cast<double>(r.t) / n) * (2.0 * w - 1.0) /
                        static_cast<double>(cs.ring_length()) * n;
  r.bound = 2.0 * r.expectation_bound;
  r.within_bound = static_cast<double>(r.d) <= r.bound;
  return r;
}

namespace detail {

inline bool neighbourhood_agrees(const CoupledState& cs, std::size_t i) {
  bool ok = true;
  const auto check = [&](std::size_t j) { ok = ok && cs.cycle().mark(j) == cs.rings().mark(j); };
  cs.cycle().for_each_in_window(i, check);
  cs.rings().for_each_in_window(i, check);
  return ok;
}

}  // namespace detail

/// Untainted nodes whose w-neighbourhood (in either graph) holds a label that
/// differs between the two graphs. Full scan, O(n w).
inline std::size_t neighbourhood_violations_full(const CoupledState& cs) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < cs.n(); ++i)
    if (!cs.tainted(i) && !detail::neighbourhood_agrees(cs, i)) ++bad;
  return bad;
}

/// The same count computed from the differing nodes only: a differing node
/// violates the invariant for every untainted node within w steps of it.
inline std::size_t neighbourhood_violations(const CoupledState& cs) {
  std::vector<std::size_t> bad;
  for (std::size_t j : cs.differing().items()) {
    const auto note = [&](std::size_t i) {
      if (!cs.tainted(i)) bad.push_back(i);
    };
    cs.cycle().for_each_in_window(j, note);
    cs.rings().for_each_in_window(j, note);
  }
  std::sort(bad.begin(), bad.end());
  return static_cast<std::size_t>(std::unique(bad.begin(), bad.end()) - bad.begin());
}

/// Checks `samples` uniformly chosen untainted-or-not nodes by full window scan.
inline std::size_t neighbourhood_violations_sampled(const CoupledState& cs, RandomSource& rng,
                                               std::size_t samples) {
  std::size_t bad = 0;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto i = static_cast<std::size_t>(rng.below(cs.n()));
    if (!cs.tainted(i) && !detail::neighbourhood_agrees(cs, i)) ++bad;
  }
  return bad;
}

}  // namespace schelling
