#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "schelling/random.hpp"
#include "schelling/ring.hpp"
#include "schelling/structures.hpp"

namespace schelling {

/// Satisfaction time of an individual that never qualified.
inline constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

/// First time t*_i each individual was proposed together with an unhappy,
/// oppositely marked partner. Individuals are named by their initial site.
class SatisfactionRecord {
 public:
  SatisfactionRecord() = default;
  explicit SatisfactionRecord(std::size_t n) : t_star_(n, kNever) {}

  std::size_t size() const noexcept { return t_star_.size(); }
  std::uint64_t t_star(std::size_t individual) const { return t_star_[individual]; }
  bool reached(std::size_t individual, std::uint64_t t) const { return t_star_[individual] <= t; }

  /// Unhappy at time t and t <= t*.
  bool impatient(const RingState& s, std::size_t individual, std::uint64_t t) const {
    return s.unhappy_at(s.site_of(individual)) && t <= t_star_[individual];
  }

  /// Applies the rule to proposal t of pair (a, b), judged on the state just
  /// before the proposal. Returns the individuals whose time was set.
  std::pair<std::size_t, std::size_t> observe(const RingState& s, std::size_t a, std::size_t b,
                                              std::uint64_t t) {
    std::pair<std::size_t, std::size_t> set{npos, npos};
    if (s.mark(a) == s.mark(b)) return set;
    const std::size_t ia = s.individual_at(a);
    const std::size_t ib = s.individual_at(b);
    if (s.unhappy_at(b) && t_star_[ia] == kNever) {
      t_star_[ia] = t;
      set.first = ia;
    }
    if (s.unhappy_at(a) && t_star_[ib] == kNever) {
      t_star_[ib] = t;
      set.second = ib;
    }
    return set;
  }

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

 private:
  std::vector<std::uint64_t> t_star_;
};

/// Run observer that maintains satisfaction times, the impatient count, the
/// stopping time T0 (first time fewer than 3n/w^2 individuals are impatient)
/// and, for each watched region F, the first time t0 at which no individual
/// in F is impatient. Faithful mode only.
class SatisfactionTracker : public RunObserver {
 public:
  struct Region {
    Block block;
    std::uint64_t t0 = kNever;
    std::size_t impatient_at_T0 = 0;
  };

  explicit SatisfactionTracker(std::vector<Block> regions = {}) {
    for (const auto& b : regions) regions_.push_back(Region{b});
  }

  void on_start(const RingState& s, Mode mode) override {
    if (mode != Mode::faithful)
      throw ParameterError("satisfaction times are only defined in faithful mode");
    const std::size_t n = s.n();
    n_ = n;
    w_ = s.w();
    record_ = SatisfactionRecord(n);
    initial_ = s.labeling();
    type_.assign(n, Mark::o);
    flag_.assign(n, 0);
    pending_[0] = pending_[1] = 0;
    pending_unhappy_ = 0;
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t site = s.site_of(p);
      type_[p] = s.mark(site);
      ++pending_[index_of(type_[p])];
      flag_[p] = s.unhappy_at(site) ? 1 : 0;
      pending_unhappy_ += flag_[p];
    }
    T0_ = kNever;
    last_time_ = s.proposals();
    just_set_ = {SatisfactionRecord::npos, SatisfactionRecord::npos};
    region_later_.assign(regions_.size(), 0);
    for (auto& r : regions_) r.t0 = kNever;
    evaluate(s, last_time_, /*at_event=*/false);
  }

  void before_proposal(const RingState& s, std::size_t a, std::size_t b, std::uint64_t t) override {
    settle_gap(t);
    just_set_ = record_.observe(s, a, b, t);
    for (std::size_t p : {just_set_.first, just_set_.second}) {
      if (p == SatisfactionRecord::npos) continue;
      --pending_[index_of(type_[p])];
      pending_unhappy_ -= flag_[p];
      flag_[p] = 0;
    }
  }

  void after_event(const RingState& s, const SwapEvent& ev) override {
    const auto update = [&](std::size_t site) {
      const std::size_t p = s.individual_at(site);
      const char f = (record_.t_star(p) == kNever && s.unhappy_at(site)) ? 1 : 0;
      pending_unhappy_ += static_cast<std::size_t>(f) - static_cast<std::size_t>(flag_[p]);
      flag_[p] = f;
    };
    if (ev.is_swap()) {
      s.for_each_in_window(ev.site_a, update);
      s.for_each_in_window(ev.site_b, update);
    } else {
      update(ev.site_a);
      update(ev.site_b);
    }
    last_time_ = ev.step;
    evaluate(s, ev.step, /*at_event=*/true);
    just_set_ = {SatisfactionRecord::npos, SatisfactionRecord::npos};
  }

  void on_finish(const RingState& s, const RunReport& report) override {
    // A frozen configuration never changes again, so the post-event counts
    // hold forever; otherwise they hold only up to the budget.
    if (s.frozen() || last_time_ < report.proposals) settle_gap(last_time_ + 2);
    final_time_ = report.proposals;
  }

  const SatisfactionRecord& record() const noexcept { return record_; }
  const Labeling& initial() const noexcept { return initial_; }
  std::span<const Region> regions() const noexcept { return regions_; }

  /// First time the impatient count dropped below 3n/w^2 (kNever if not observed).
  std::uint64_t T0() const noexcept { return T0_; }

  /// Impatient count at the time of the last observed event.
  std::size_t impatient_now() const noexcept { return impatient_now_; }
  /// Impatient count at every later time up to the next event.
  std::size_t impatient_between() const noexcept { return pending_unhappy_; }
  /// Individuals of mark m whose satisfaction time has not been reached.
  std::size_t pending(Mark m) const noexcept { return pending_[index_of(m)]; }

  /// impatient * w^2 < 3n, evaluated exactly.
  bool below_threshold(std::size_t impatient) const noexcept {
    return impatient * static_cast<std::size_t>(w_) * static_cast<std::size_t>(w_) < 3 * n_;
  }

 private:
  // Times strictly between the last event and t carry the post-event
  // "between" counts; resolve any stopping time that falls there.
  void settle_gap(std::uint64_t t) {
    if (t <= last_time_ + 1) return;
    const std::uint64_t gap = last_time_ + 1;
    if (T0_ == kNever && below_threshold(pending_unhappy_)) {
      T0_ = gap;
      for (std::size_t k = 0; k < regions_.size(); ++k)
        regions_[k].impatient_at_T0 = region_later_[k];
    }
    for (std::size_t k = 0; k < regions_.size(); ++k)
      if (regions_[k].t0 == kNever && region_later_[k] == 0) regions_[k].t0 = gap;
  }

  void evaluate(const RingState& s, std::uint64_t t, bool at_event) {
    std::size_t just = 0;
    if (at_event) {
      for (std::size_t p : {just_set_.first, just_set_.second})
        if (p != SatisfactionRecord::npos && s.unhappy_at(s.site_of(p))) ++just;
    }
    impatient_now_ = pending_unhappy_ + just;
    const bool resolve_T0 = T0_ == kNever && below_threshold(impatient_now_);
    for (std::size_t k = 0; k < regions_.size(); ++k) {
      auto& r = regions_[k];
      if (r.t0 != kNever && T0_ != kNever && !resolve_T0) continue;
      std::size_t now = 0, later = 0;
      for (std::size_t j = 0; j < r.block.length; ++j) {
        const std::size_t site = r.block.site(j, n_);
        if (!s.unhappy_at(site)) continue;
        const std::uint64_t ts = record_.t_star(s.individual_at(site));
        if (ts == kNever) ++later;
        if (ts == kNever || ts == t) ++now;
      }
      region_later_[k] = later;
      if (resolve_T0) r.impatient_at_T0 = now;
      if (r.t0 == kNever && now == 0) r.t0 = t;
    }
    if (resolve_T0) T0_ = t;
  }

  std::size_t n_ = 0;
  int w_ = 1;
  SatisfactionRecord record_;
  Labeling initial_;
  std::vector<Mark> type_;
  std::vector<char> flag_;  // pending and unhappy
  std::size_t pending_[2] = {0, 0};
  std::size_t pending_unhappy_ = 0;
  std::size_t impatient_now_ = 0;
  std::uint64_t T0_ = kNever;
  std::uint64_t last_time_ = 0;
  std::uint64_t final_time_ = 0;
  std::pair<std::size_t, std::size_t> just_set_{SatisfactionRecord::npos, SatisfactionRecord::npos};
  std::vector<Region> regions_;
  std::vector<std::size_t> region_later_;
};

enum class Side { left, right };

/// +1 for an attacker, -1 for a defender.
struct Combatant {
  std::size_t individual = 0;
  int sign = 0;
};

struct Combatants {
  std::vector<Combatant> left;
  std::vector<Combatant> right;
  int a_left = 0;
  int d_left = 0;
  int a_right = 0;
  int d_right = 0;
};

/// Attackers are initial occupants of A carrying the incubator's mark;
/// defenders are initial occupants of D carrying the other mark.
inline Combatants combatants(const Incubator& inc, const Labeling& initial) {
  const std::size_t n = initial.size();
  Combatants c;
  const auto collect = [&](const Block& attack, const Block& defend, std::vector<Combatant>& out,
                           int& a, int& d) {
    for (std::size_t k = 0; k < attack.length; ++k) {
      const std::size_t s = attack.site(k, n);
      if (initial[s] == inc.type) {
        out.push_back({s, +1});
        ++a;
      }
    }
    for (std::size_t k = 0; k < defend.length; ++k) {
      const std::size_t s = defend.site(k, n);
      if (initial[s] != inc.type) {
        out.push_back({s, -1});
        ++d;
      }
    }
  };
  collect(inc.left_attacker, inc.left_defender, c.left, c.a_left, c.d_left);
  collect(inc.right_attacker, inc.right_defender, c.right, c.a_right, c.d_right);
  return c;
}

struct Transcript {
  Side side = Side::left;
  std::vector<int> signs;
  std::vector<std::size_t> individuals;
  std::vector<std::uint64_t> times;
  int attackers = 0;
  int defenders = 0;
  /// Two entries shared a finite satisfaction time (order broken by individual).
  bool tie = false;

  std::size_t size() const noexcept { return signs.size(); }

  std::vector<int> prefix_sums() const {
    std::vector<int> out(signs.size());
    std::partial_sum(signs.begin(), signs.end(), out.begin());
    return out;
  }

  bool nonnegative() const {
    int sum = 0;
    for (int v : signs) {
      sum += v;
      if (sum < 0) return false;
    }
    return true;
  }
};

/// Combatants listed by decreasing satisfaction time. Entries that never
/// reached a satisfaction time come first, ordered by individual.
inline Transcript transcript_of(const SatisfactionRecord& record, std::span<const Combatant> set,
                                Side side) {
  std::vector<Combatant> sorted(set.begin(), set.end());
  std::sort(sorted.begin(), sorted.end(), [&](const Combatant& a, const Combatant& b) {
    const auto ta = record.t_star(a.individual);
    const auto tb = record.t_star(b.individual);
    if (ta != tb) return ta > tb;
    return a.individual < b.individual;
  });
  Transcript tr;
  tr.side = side;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const auto t = record.t_star(sorted[k].individual);
    tr.signs.push_back(sorted[k].sign);
    tr.individuals.push_back(sorted[k].individual);
    tr.times.push_back(t);
    (sorted[k].sign > 0 ? tr.attackers : tr.defenders) += 1;
    if (k > 0 && t != kNever && tr.times[k - 1] == t) tr.tie = true;
  }
  return tr;
}

/// Length of the leading block of entries with satisfaction time after t0.
inline std::size_t scramblable_prefix(const Transcript& tr, std::uint64_t t0) {
  std::size_t k = 0;
  while (k < tr.times.size() && tr.times[k] > t0) ++k;
  return k;
}

/// Whether some pseudo-transcript has all partial sums non-negative. The
/// best rearrangement of the free prefix puts every +1 first.
inline bool pseudo_transcript_nonnegative_exists(const Transcript& tr, std::uint64_t t0) {
  if (t0 == kNever) return false;
  const std::size_t k = scramblable_prefix(tr, t0);
  Transcript best = tr;
  std::sort(best.signs.begin(), best.signs.begin() + static_cast<std::ptrdiff_t>(k),
            std::greater<int>());
  return best.nonnegative();
}

/// A uniformly random pseudo-transcript.
inline Transcript scramble(const Transcript& tr, std::uint64_t t0, RandomSource& rng) {
  if (t0 == kNever) throw ParameterError("pseudo-transcripts need a defined t0");
  Transcript out = tr;
  const std::size_t k = scramblable_prefix(tr, t0);
  for (std::size_t i = k; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(out.signs[i - 1], out.signs[j]);
    std::swap(out.individuals[i - 1], out.individuals[j]);
    std::swap(out.times[i - 1], out.times[j]);
  }
  return out;
}

/// Censored-swap classification for a block B at one instant.
///
/// With n_x, n_o the unhappy counts outside pad(B), let the minority mark be
/// the one with the smaller count (x on ties) and C the k = |n_o - n_x|
/// lowest-indexed unhappy sites of the other mark outside pad(B). Every pair
/// inside pad(B) is censored, as is every pair of a minority-mark site in
/// pad(B) with a site of C. All other pairs are uncensored.
class CensorshipScheme {
 public:
  CensorshipScheme(const RingState& s, const Block& block)
      : block_(block), padded_(pad(block, s.w(), s.n())) {
    const std::size_t n = s.n();
    marks_.assign(s.labeling().sites().begin(), s.labeling().sites().end());
    unhappy_.resize(n);
    in_pad_.assign(n, 0);
    in_c_.assign(n, 0);
    for (std::size_t k = 0; k < padded_.length; ++k) in_pad_[padded_.site(k, n)] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      unhappy_[i] = s.unhappy_at(i) ? 1 : 0;
      if (unhappy_[i] && !in_pad_[i]) ++outside_[index_of(marks_[i])];
    }
    minority_ = n_x() <= n_o() ? Mark::x : Mark::o;
    const Mark excess = opposite(minority_);
    std::size_t k = n_x() > n_o() ? n_x() - n_o() : n_o() - n_x();
    for (std::size_t i = 0; i < n && k > 0; ++i) {
      if (unhappy_[i] && !in_pad_[i] && marks_[i] == excess) {
        in_c_[i] = 1;
        compensating_.push_back(i);
        --k;
      }
    }
  }

  const Block& block() const noexcept { return block_; }
  const Block& padded() const noexcept { return padded_; }
  std::size_t n_x() const noexcept { return outside_[index_of(Mark::x)]; }
  std::size_t n_o() const noexcept { return outside_[index_of(Mark::o)]; }
  Mark minority() const noexcept { return minority_; }
  std::span<const std::size_t> compensating() const noexcept { return compensating_; }
  bool in_pad(std::size_t i) const { return in_pad_[i] != 0; }

  bool is_censored(std::size_t i, std::size_t j) const {
    if (in_pad_[i] && in_pad_[j]) return true;
    if (in_pad_[i] && marks_[i] == minority_ && in_c_[j]) return true;
    if (in_pad_[j] && marks_[j] == minority_ && in_c_[i]) return true;
    return false;
  }

  /// Unhappy oppositely marked sites j whose pair with i is uncensored.
  std::size_t uncensored_partners(std::size_t i) const {
    std::size_t count = 0;
    for (std::size_t j = 0; j < marks_.size(); ++j)
      if (j != i && unhappy_[j] && marks_[j] != marks_[i] && !is_censored(i, j)) ++count;
    return count;
  }

  std::size_t censored_partners(std::size_t i) const {
    std::size_t count = 0;
    for (std::size_t j = 0; j < marks_.size(); ++j)
      if (j != i && unhappy_[j] && marks_[j] != marks_[i] && is_censored(i, j)) ++count;
    return count;
  }

 private:
  Block block_;
  Block padded_;
  std::vector<Mark> marks_;
  std::vector<char> unhappy_;
  std::vector<char> in_pad_;
  std::vector<char> in_c_;
  std::size_t outside_[2] = {0, 0};
  Mark minority_ = Mark::x;
  std::vector<std::size_t> compensating_;
};

inline CensorshipScheme censorship_scheme(const RingState& s, const Block& block) {
  return CensorshipScheme(s, block);
}

struct IncubatorOutcome {
  Incubator incubator;
  Transcript left;
  Transcript right;
  std::uint64_t t0 = kNever;
  bool left_nonnegative = false;
  bool right_nonnegative = false;
  /// Both sides admit a non-negative pseudo-transcript (needs a defined t0).
  bool pseudo_nonnegative = false;
  bool became_firewall = false;
  /// Some individual of F was impatient at T0 (false when T0 is undefined).
  bool impatient_at_T0 = false;

  bool realized_nonnegative() const noexcept { return left_nonnegative && right_nonnegative; }
  /// Non-negative pseudo-transcripts on both sides force F to become a firewall.
  bool implication_holds() const noexcept { return !pseudo_nonnegative || became_firewall; }
};

inline std::vector<Block> regions_of(std::span<const Incubator> incubators) {
  std::vector<Block> out;
  for (const auto& inc : incubators) out.push_back(inc.region());
  return out;
}

/// Evaluates each incubator against a finished faithful run. The tracker must
/// have watched regions_of(incubators), in the same order.
inline std::vector<IncubatorOutcome> check_incubator_outcomes(
    const SatisfactionTracker& tracker, std::span<const Incubator> incubators,
    const Labeling& final_labeling) {
  if (tracker.regions().size() != incubators.size())
    throw ParameterError("tracker regions do not match the incubator list");
  std::vector<IncubatorOutcome> out;
  for (std::size_t k = 0; k < incubators.size(); ++k) {
    const auto& inc = incubators[k];
    const auto c = combatants(inc, tracker.initial());
    IncubatorOutcome o;
    o.incubator = inc;
    o.left = transcript_of(tracker.record(), c.left, Side::left);
    o.right = transcript_of(tracker.record(), c.right, Side::right);
    o.t0 = tracker.regions()[k].t0;
    o.left_nonnegative = o.left.nonnegative();
    o.right_nonnegative = o.right.nonnegative();
    o.pseudo_nonnegative = pseudo_transcript_nonnegative_exists(o.left, o.t0) &&
                           pseudo_transcript_nonnegative_exists(o.right, o.t0);
    o.became_firewall = region_is_firewall(final_labeling, inc);
    o.impatient_at_T0 = tracker.T0() != kNever && tracker.regions()[k].impatient_at_T0 > 0;
    out.push_back(std::move(o));
  }
  return out;
}

/// Run observer asserting that firewall sites never change mark and that the
/// number of firewall members never decreases.
class FirewallMonitor : public RunObserver {
 public:
  void on_start(const RingState& s, Mode) override {
    refresh(s.labeling(), s.w());
    phi_ = census_.members;
  }

  void before_proposal(const RingState&, std::size_t a, std::size_t b, std::uint64_t) override {
    a_was_member_ = member_[a] != 0;
    b_was_member_ = member_[b] != 0;
  }

  void after_event(const RingState& s, const SwapEvent& ev) override {
    if (!ev.is_swap()) return;
    ++swaps_checked_;
    if (a_was_member_ || b_was_member_) ++member_flips_;
    refresh(s.labeling(), s.w());
    if (census_.members < phi_) ++potential_drops_;
    phi_ = census_.members;
  }

  std::size_t member_flips() const noexcept { return member_flips_; }
  std::size_t potential_drops() const noexcept { return potential_drops_; }
  std::size_t swaps_checked() const noexcept { return swaps_checked_; }
  std::size_t potential() const noexcept { return phi_; }

 private:
  void refresh(const Labeling& lab, int w) {
    const auto stats = run_lengths(lab);
    census_ = firewall_census(stats, w);
    member_.assign(lab.size(), 0);
    for (const auto& r : stats.runs) {
      if (r.length < static_cast<std::size_t>(w) + 1) continue;
      for (std::size_t k = 0; k < r.length; ++k) member_[(r.start + k) % lab.size()] = 1;
    }
  }

  FirewallCensus census_;
  std::vector<char> member_;
  std::size_t phi_ = 0;
  bool a_was_member_ = false;
  bool b_was_member_ = false;
  std::size_t member_flips_ = 0;
  std::size_t potential_drops_ = 0;
  std::size_t swaps_checked_ = 0;
};

}  // namespace schelling
