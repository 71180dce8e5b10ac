#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "schelling/random.hpp"

namespace schelling {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a step needs an effective swap but one of the unhappy sets is empty.
class FrozenError : public std::logic_error {
 public:
  FrozenError() : std::logic_error("configuration is frozen: no effective swap exists") {}
};

enum class Mark : std::uint8_t { o = 0, x = 1 };

constexpr int sign_of(Mark m) noexcept { return m == Mark::x ? 1 : -1; }
constexpr Mark opposite(Mark m) noexcept { return m == Mark::x ? Mark::o : Mark::x; }
constexpr char to_char(Mark m) noexcept { return m == Mark::x ? 'x' : 'o'; }
constexpr std::size_t index_of(Mark m) noexcept { return static_cast<std::size_t>(m); }

/// A happy occupant has its own sign agreeing with the window sum. The window
/// sum has 2w+1 odd terms, so it is never zero.
constexpr bool is_happy(Mark m, int bias) noexcept { return sign_of(m) * bias > 0; }

/// Circular sequence of site marks.
class Labeling {
 public:
  Labeling() = default;
  explicit Labeling(std::vector<Mark> sites) : sites_(std::move(sites)) {}

  static Labeling parse(std::string_view text) {
    std::vector<Mark> sites;
    sites.reserve(text.size());
    for (char c : text) {
      if (c == 'x' || c == 'X') {
        sites.push_back(Mark::x);
      } else if (c == 'o' || c == 'O') {
        sites.push_back(Mark::o);
      } else {
        throw ParameterError(std::string("labeling may only contain 'x' and 'o', got '") + c + "'");
      }
    }
    return Labeling(std::move(sites));
  }

  /// Each site independently x or o with probability 1/2.
  static Labeling uniform(std::size_t n, RandomSource& rng) {
    std::vector<Mark> sites(n);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng.next();
      sites[i] = (bits & 1) ? Mark::x : Mark::o;
      bits >>= 1;
    }
    return Labeling(std::move(sites));
  }

  std::size_t size() const noexcept { return sites_.size(); }
  Mark operator[](std::size_t i) const { return sites_[i]; }

  /// Circular access; any integer index is reduced mod n.
  Mark at(std::ptrdiff_t i) const {
    const auto n = static_cast<std::ptrdiff_t>(sites_.size());
    return sites_[static_cast<std::size_t>(((i % n) + n) % n)];
  }

  void set(std::size_t i, Mark m) { sites_[i] = m; }
  std::span<const Mark> sites() const noexcept { return sites_; }

  std::size_t count(Mark m) const {
    return static_cast<std::size_t>(std::count(sites_.begin(), sites_.end(), m));
  }

  std::string str() const {
    std::string s;
    s.reserve(sites_.size());
    for (Mark m : sites_) s.push_back(to_char(m));
    return s;
  }

  Labeling flipped() const {
    std::vector<Mark> out(sites_.size());
    std::transform(sites_.begin(), sites_.end(), out.begin(), opposite);
    return Labeling(std::move(out));
  }

  Labeling reversed() const { return Labeling(std::vector<Mark>(sites_.rbegin(), sites_.rend())); }

  bool operator==(const Labeling&) const = default;

 private:
  std::vector<Mark> sites_;
};

/// Graph the sites live on: a disjoint union of n / ring_length cycles.
/// The single n-cycle is the case ring_length == n.
struct Topology {
  std::size_t n = 0;
  std::size_t ring_length = 0;

  static Topology cycle(std::size_t n) { return {n, n}; }
  static Topology disjoint_rings(std::size_t n, std::size_t ring_length) {
    return {n, ring_length};
  }

  bool single_cycle() const noexcept { return ring_length == n; }
  std::size_t ring_of(std::size_t i) const noexcept { return i / ring_length; }

  /// Site reached from i by moving d steps clockwise inside i's cycle.
  std::size_t offset(std::size_t i, std::ptrdiff_t d) const noexcept {
    const auto len = static_cast<std::ptrdiff_t>(ring_length);
    const auto base = static_cast<std::ptrdiff_t>(i / ring_length) * len;
    const auto pos = static_cast<std::ptrdiff_t>(i) - base;
    return static_cast<std::size_t>(base + (((pos + d) % len) + len) % len);
  }

  bool operator==(const Topology&) const = default;
};

/// Validates (n, ring_length, w) for a process on the given topology.
inline void validate_parameters(const Topology& topo, int w) {
  if (w < 1) throw ParameterError("window size w must be at least 1");
  const auto window = static_cast<std::size_t>(2 * w + 1);
  if (topo.single_cycle()) {
    if (topo.n < window + 1)
      throw ParameterError("ring size n must be at least 2w+2 (n=" + std::to_string(topo.n) +
                           ", w=" + std::to_string(w) + ")");
    return;
  }
  if (topo.ring_length < window)
    throw ParameterError("ring length L must be at least 2w+1 (L=" +
                         std::to_string(topo.ring_length) + ", w=" + std::to_string(w) + ")");
  if (topo.ring_length == 0 || topo.n % topo.ring_length != 0)
    throw ParameterError("n must be divisible by the ring length L");
}

/// Sum of signs over the 2w+1 sites centred at i.
inline int compute_bias(const Labeling& labeling, const Topology& topo, int w, std::size_t i) {
  if (i >= labeling.size()) throw ParameterError("site index out of range");
  int sum = 0;
  for (int d = -w; d <= w; ++d) sum += sign_of(labeling[topo.offset(i, d)]);
  return sum;
}

inline int compute_bias(const Labeling& labeling, int w, std::size_t i) {
  return compute_bias(labeling, Topology::cycle(labeling.size()), w, i);
}

/// Set of site indices with O(1) insert, erase, membership and uniform sampling.
class IndexedSet {
 public:
  static constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();

  IndexedSet() = default;
  explicit IndexedSet(std::size_t universe) : pos_(universe, npos) {}

  bool contains(std::size_t i) const noexcept { return pos_[i] != npos; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  std::size_t operator[](std::size_t k) const noexcept { return items_[k]; }
  std::span<const std::uint32_t> items() const noexcept { return items_; }

  void insert(std::size_t i) {
    if (pos_[i] != npos) return;
    pos_[i] = static_cast<std::uint32_t>(items_.size());
    items_.push_back(static_cast<std::uint32_t>(i));
  }

  void erase(std::size_t i) {
    const std::uint32_t k = pos_[i];
    if (k == npos) return;
    const std::uint32_t last = items_.back();
    items_[k] = last;
    pos_[last] = k;
    items_.pop_back();
    pos_[i] = npos;
  }

  std::size_t sample(RandomSource& rng) const { return items_[rng.below(items_.size())]; }

 private:
  std::vector<std::uint32_t> items_;
  std::vector<std::uint32_t> pos_;
};

struct SwapEvent {
  enum class Kind : std::uint8_t { swap, null_proposal };

  std::uint64_t step = 0;  // 1-based index of the proposal that produced the event
  std::size_t site_a = 0;
  std::size_t site_b = 0;
  Kind kind = Kind::null_proposal;

  bool is_swap() const noexcept { return kind == Kind::swap; }
};

/// Live simulation state: labeling, cached biases, unhappy sets, individuals.
///
/// Individuals are numbered by their site at construction time; occupants
/// travel with swaps so per-individual instrumentation can follow them.
class RingState {
 public:
  RingState(Labeling labeling, Topology topo, int w)
      : labeling_(std::move(labeling)), topo_(topo), w_(w) {
    if (labeling_.size() != topo_.n) throw ParameterError("labeling size does not match n");
    validate_parameters(topo_, w_);
    const std::size_t n = topo_.n;
    bias_.assign(n, 0);
    unhappy_[0] = IndexedSet(n);
    unhappy_[1] = IndexedSet(n);
    by_mark_[0] = IndexedSet(n);
    by_mark_[1] = IndexedSet(n);
    occupant_.resize(n);
    site_of_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      bias_[i] = compute_bias(labeling_, topo_, w_, i);
      occupant_[i] = static_cast<std::uint32_t>(i);
      site_of_[i] = static_cast<std::uint32_t>(i);
      by_mark_[index_of(labeling_[i])].insert(i);
      refresh(i);
    }
  }

  /// Test hook: single n-cycle with a forced labeling.
  static RingState from_string(std::string_view text, int w) {
    auto lab = Labeling::parse(text);
    const auto topo = Topology::cycle(lab.size());
    return RingState(std::move(lab), topo, w);
  }

  const Labeling& labeling() const noexcept { return labeling_; }
  const Topology& topology() const noexcept { return topo_; }
  int w() const noexcept { return w_; }
  std::size_t n() const noexcept { return topo_.n; }
  Mark mark(std::size_t i) const { return labeling_[i]; }
  int bias(std::size_t i) const { return bias_[i]; }
  std::span<const int> biases() const noexcept { return bias_; }
  bool unhappy_at(std::size_t i) const { return !is_happy(labeling_[i], bias_[i]); }
  const IndexedSet& unhappy(Mark m) const noexcept { return unhappy_[index_of(m)]; }
  const IndexedSet& sites_with(Mark m) const noexcept { return by_mark_[index_of(m)]; }
  std::size_t count(Mark m) const noexcept { return by_mark_[index_of(m)].size(); }
  std::size_t unhappy_count() const noexcept { return unhappy_[0].size() + unhappy_[1].size(); }
  std::uint64_t proposals() const noexcept { return proposals_; }
  std::uint64_t swaps() const noexcept { return swaps_; }

  std::size_t individual_at(std::size_t site) const { return occupant_[site]; }
  std::size_t site_of(std::size_t individual) const { return site_of_[individual]; }

  bool frozen() const noexcept { return unhappy_[0].empty() || unhappy_[1].empty(); }

  /// Calls fn(site) for each of the 2w+1 sites in i's window.
  template <class Fn>
  void for_each_in_window(std::size_t i, Fn&& fn) const {
    for (int d = -w_; d <= w_; ++d) fn(topo_.offset(i, d));
  }

  /// Applies the swap rule to the proposed pair (a, b): the occupants swap iff
  /// they carry opposite marks and both are unhappy. Counts one proposal.
  SwapEvent propose(std::size_t a, std::size_t b) {
    ++proposals_;
    SwapEvent ev{proposals_, a, b, SwapEvent::Kind::null_proposal};
    if (a != b && labeling_[a] != labeling_[b] && unhappy_at(a) && unhappy_at(b)) {
      exchange(a, b);
      ev.kind = SwapEvent::Kind::swap;
    }
    return ev;
  }

  /// Records `count` proposals that were skipped because they could not change anything.
  void advance(std::uint64_t count) noexcept { proposals_ += count; }

  /// Recomputes every bias from scratch and compares with the cache and the sets.
  bool consistent() const {
    std::size_t n_unhappy[2] = {0, 0};
    for (std::size_t i = 0; i < topo_.n; ++i) {
      if (bias_[i] != compute_bias(labeling_, topo_, w_, i)) return false;
      if (bias_[i] % 2 == 0) return false;
      const bool u = unhappy_at(i);
      if (u) ++n_unhappy[index_of(labeling_[i])];
      if (unhappy_[index_of(labeling_[i])].contains(i) != u) return false;
      if (unhappy_[index_of(opposite(labeling_[i]))].contains(i)) return false;
      if (!by_mark_[index_of(labeling_[i])].contains(i)) return false;
      if (site_of_[occupant_[i]] != i) return false;
    }
    return n_unhappy[0] == unhappy_[0].size() && n_unhappy[1] == unhappy_[1].size();
  }

 private:
  void refresh(std::size_t i) {
    const Mark m = labeling_[i];
    if (is_happy(m, bias_[i])) {
      unhappy_[index_of(m)].erase(i);
    } else {
      unhappy_[index_of(m)].insert(i);
    }
    unhappy_[index_of(opposite(m))].erase(i);
  }

  void exchange(std::size_t a, std::size_t b) {
    const Mark ma = labeling_[a];
    const Mark mb = labeling_[b];
    const int da = sign_of(mb) - sign_of(ma);  // change of a's sign, +-2
    labeling_.set(a, mb);
    labeling_.set(b, ma);
    by_mark_[index_of(ma)].erase(a);
    by_mark_[index_of(mb)].insert(a);
    by_mark_[index_of(mb)].erase(b);
    by_mark_[index_of(ma)].insert(b);
    std::swap(occupant_[a], occupant_[b]);
    site_of_[occupant_[a]] = static_cast<std::uint32_t>(a);
    site_of_[occupant_[b]] = static_cast<std::uint32_t>(b);
    for_each_in_window(a, [&](std::size_t s) { bias_[s] += da; });
    for_each_in_window(b, [&](std::size_t s) { bias_[s] -= da; });
    for_each_in_window(a, [&](std::size_t s) { refresh(s); });
    for_each_in_window(b, [&](std::size_t s) { refresh(s); });
    ++swaps_;
  }

  Labeling labeling_;
  Topology topo_;
  int w_;
  std::vector<int> bias_;
  IndexedSet unhappy_[2];
  IndexedSet by_mark_[2];
  std::vector<std::uint32_t> occupant_;
  std::vector<std::uint32_t> site_of_;
  std::uint64_t proposals_ = 0;
  std::uint64_t swaps_ = 0;
};

inline RingState init_random(std::size_t n, int w, RandomSource& rng) {
  validate_parameters(Topology::cycle(n), w);
  return RingState(Labeling::uniform(n, rng), Topology::cycle(n), w);
}

/// Random start on the disjoint union of n / L cycles of length L.
inline RingState init_random_rings(std::size_t n, std::size_t ring_length, int w,
                                   RandomSource& rng) {
  const auto topo = Topology::disjoint_rings(n, ring_length);
  validate_parameters(topo, w);
  return RingState(Labeling::uniform(n, rng), topo, w);
}

inline bool is_frozen(const RingState& state) noexcept { return state.frozen(); }

/// A drawn pair plus the number of inert proposals that preceded it.
struct Draw {
  std::size_t a = 0;
  std::size_t b = 0;
  std::uint64_t skipped = 0;
};

/// Effective pair, uniform over unhappy_x x unhappy_o, with the geometric
/// count of null proposals that the literal process would have spent first.
inline Draw draw_accelerated(const RingState& state, RandomSource& rng) {
  if (state.frozen()) throw FrozenError();
  const auto& ux = state.unhappy(Mark::x);
  const auto& uo = state.unhappy(Mark::o);
  const double n = static_cast<double>(state.n());
  const double p = 2.0 * static_cast<double>(ux.size()) * static_cast<double>(uo.size()) /
                   (n * (n - 1.0));
  Draw d;
  d.a = ux.sample(rng);
  d.b = uo.sample(rng);
  d.skipped = rng.geometric_failures(p);
  return d;
}

/// Number of unordered pairs whose proposal can set a satisfaction time or
/// swap: an unhappy occupant paired with an occupant of the opposite mark.
inline double relevant_pair_count(const RingState& state) {
  const double ux = static_cast<double>(state.unhappy(Mark::x).size());
  const double uo = static_cast<double>(state.unhappy(Mark::o).size());
  return ux * static_cast<double>(state.count(Mark::o)) +
         uo * static_cast<double>(state.count(Mark::x)) - ux * uo;
}

/// Next relevant proposal of the literal process, skipping the inert ones.
/// The pair is uniform over relevant pairs; the skip count is geometric.
inline Draw draw_relevant(const RingState& state, RandomSource& rng) {
  const auto& ux = state.unhappy(Mark::x);
  const auto& uo = state.unhappy(Mark::o);
  const double wx = static_cast<double>(ux.size()) * static_cast<double>(state.count(Mark::o));
  const double wo = static_cast<double>(uo.size()) * static_cast<double>(state.count(Mark::x));
  const double relevant = relevant_pair_count(state);
  if (relevant <= 0.0) throw FrozenError();
  const double n = static_cast<double>(state.n());
  Draw d;
  d.skipped = rng.geometric_failures(relevant / (n * (n - 1.0) / 2.0));
  for (;;) {
    const bool x_side = rng.uniform() * (wx + wo) < wx;
    const Mark m = x_side ? Mark::x : Mark::o;
    const std::size_t a = state.unhappy(m).sample(rng);
    const std::size_t b = state.sites_with(opposite(m)).sample(rng);
    // Pairs of two unhappy opposite occupants are reachable from either side.
    if (state.unhappy_at(b) && rng.coin()) continue;
    d.a = a;
    d.b = b;
    return d;
  }
}

/// One literal proposal: a uniform unordered pair of distinct sites.
inline SwapEvent propose_faithful(RingState& state, RandomSource& rng) {
  const auto [a, b] = rng.distinct_pair(state.n());
  return state.propose(a, b);
}

/// One effective swap of the time-compressed process.
inline SwapEvent step_accelerated(RingState& state, RandomSource& rng) {
  const Draw d = draw_accelerated(state, rng);
  state.advance(d.skipped);
  return state.propose(d.a, d.b);
}

enum class Mode { faithful, accelerated };

inline const char* to_string(Mode m) noexcept {
  return m == Mode::faithful ? "faithful" : "accelerated";
}

struct RunOptions {
  Mode mode = Mode::accelerated;
  /// Budget on (virtual) proposals; 0 means unlimited.
  std::uint64_t max_proposals = 0;
  /// Budget on effective swaps; 0 means unlimited.
  std::uint64_t max_swaps = 0;
  /// Faithful mode only: jump over proposals that cannot change the state or
  /// any satisfaction time. The law of the observed proposals is unchanged.
  bool skip_inert = true;

  static RunOptions faithful_defaults() { return {Mode::faithful, 5'000'000'000ULL, 0, true}; }
  static RunOptions accelerated_defaults() { return {Mode::accelerated, 0, 100'000'000ULL, true}; }
};

struct RunReport {
  Mode mode = Mode::accelerated;
  std::size_t n = 0;
  int w = 0;
  std::uint64_t proposals = 0;
  std::uint64_t swaps = 0;
  bool frozen = false;
  bool budget_exhausted = false;
};

/// Instrumentation callbacks invoked synchronously by run_to_frozen.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_start(const RingState&, Mode) {}
  /// Called with the pre-event state; t is the index the proposal will get.
  virtual void before_proposal(const RingState&, std::size_t, std::size_t, std::uint64_t) {}
  virtual void after_event(const RingState&, const SwapEvent&) {}
  virtual void on_finish(const RingState&, const RunReport&) {}
};

/// Records every event (or only swaps) for replay.
class EventLog : public RunObserver {
 public:
  explicit EventLog(bool swaps_only = true) : swaps_only_(swaps_only) {}

  void on_start(const RingState& s, Mode) override { initial_ = s.labeling(); }
  void after_event(const RingState&, const SwapEvent& ev) override {
    if (!swaps_only_ || ev.is_swap()) events_.push_back(ev);
  }

  const Labeling& initial() const noexcept { return initial_; }
  const std::vector<SwapEvent>& events() const noexcept { return events_; }

 private:
  bool swaps_only_;
  Labeling initial_;
  std::vector<SwapEvent> events_;
};

/// Iterates the chosen stepping rule until frozen or out of budget.
inline RunReport run_to_frozen(RingState& state, RandomSource& rng, const RunOptions& opts,
                               std::span<RunObserver* const> observers = {}) {
  RunReport report;
  report.mode = opts.mode;
  report.n = state.n();
  report.w = state.w();
  const std::uint64_t start_swaps = state.swaps();
  for (auto* o : observers) o->on_start(state, opts.mode);

  const auto over_proposals = [&](std::uint64_t extra) {
    return opts.max_proposals != 0 &&
           (state.proposals() >= opts.max_proposals ||
            extra > opts.max_proposals - state.proposals());
  };

  while (!state.frozen()) {
    if (opts.max_swaps != 0 && state.swaps() - start_swaps >= opts.max_swaps) {
      report.budget_exhausted = true;
      break;
    }
    Draw d;
    if (opts.mode == Mode::accelerated) {
      d = draw_accelerated(state, rng);
    } else if (opts.skip_inert) {
      d = draw_relevant(state, rng);
    } else {
      const auto pair = rng.distinct_pair(state.n());
      d = Draw{pair.first, pair.second, 0};
    }
    if (over_proposals(d.skipped + 1)) {
      if (opts.max_proposals > state.proposals())
        state.advance(opts.max_proposals - state.proposals());
      report.budget_exhausted = true;
      break;
    }
    state.advance(d.skipped);
    const std::uint64_t t = state.proposals() + 1;
    for (auto* o : observers) o->before_proposal(state, d.a, d.b, t);
    const SwapEvent ev = state.propose(d.a, d.b);
    for (auto* o : observers) o->after_event(state, ev);
  }

  report.proposals = state.proposals();
  report.swaps = state.swaps() - start_swaps;
  report.frozen = state.frozen();
  for (auto* o : observers) o->on_finish(state, report);
  return report;
}

inline RunReport run_to_frozen(RingState& state, RandomSource& rng, const RunOptions& opts,
                               std::initializer_list<RunObserver*> observers) {
  return run_to_frozen(state, rng, opts,
                       std::span<RunObserver* const>(observers.begin(), observers.size()));
}

}  // namespace schelling
