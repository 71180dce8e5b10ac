#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "schelling/combinatorics.hpp"
#include "schelling/coupling.hpp"
#include "schelling/meanfield.hpp"
#include "schelling/ring.hpp"
#include "schelling/structures.hpp"
#include "schelling/trace.hpp"

namespace schelling {

inline constexpr const char* kVersion = "0.3.0";
inline constexpr int kRecordSchema = 1;

inline nlohmann::json to_json(const RunReport& r) {
  return {{"schema", kRecordSchema}, {"mode", to_string(r.mode)},  {"n", r.n},
          {"w", r.w},                {"proposals", r.proposals},   {"swaps", r.swaps},
          {"frozen", r.frozen},      {"budget_exhausted", r.budget_exhausted}};
}

inline Mode parse_mode(const std::string& s) {
  if (s == "faithful") return Mode::faithful;
  if (s == "accelerated") return Mode::accelerated;
  throw ParameterError("unknown mode '" + s + "' (expected faithful or accelerated)");
}

/// Calls fn(state, t, at_event) with the state as it stood at each requested
/// time t. at_event is true when an event happened exactly at t.
class ScheduledSampler : public RunObserver {
 public:
  using Callback = std::function<void(const RingState&, std::uint64_t, bool)>;

  ScheduledSampler(std::vector<std::uint64_t> times, Callback fn)
      : times_(std::move(times)), fn_(std::move(fn)) {
    std::sort(times_.begin(), times_.end());
  }

  void on_start(const RingState& s, Mode) override { flush_before(s, s.proposals() + 1); }
  void before_proposal(const RingState& s, std::size_t, std::size_t, std::uint64_t t) override {
    flush_before(s, t);
  }
  void after_event(const RingState& s, const SwapEvent& ev) override {
    while (next_ < times_.size() && times_[next_] == ev.step) fn_(s, times_[next_++], true);
  }
  void on_finish(const RingState& s, const RunReport& report) override {
    const std::uint64_t end = s.frozen() ? std::numeric_limits<std::uint64_t>::max() : report.proposals + 1;
    flush_before(s, end);
  }

 private:
  void flush_before(const RingState& s, std::uint64_t t) {
    while (next_ < times_.size() && times_[next_] < t) fn_(s, times_[next_++], false);
  }

  std::vector<std::uint64_t> times_;
  Callback fn_;
  std::size_t next_ = 0;
};

inline std::vector<std::uint64_t> stride_times(std::uint64_t stride, std::uint64_t horizon) {
  std::vector<std::uint64_t> out;
  if (stride == 0) stride = 1;
  for (std::uint64_t t = 0; t <= horizon; t += stride) out.push_back(t);
  return out;
}

struct BalanceSample {
  std::uint64_t t = 0;
  std::size_t unhappy_x = 0;
  std::size_t unhappy_o = 0;
  /// Impatient count; -1 when satisfaction times are not tracked.
  long long impatient = -1;
  double phi_x = 0.0;
  double phi_o = 0.0;
  double psi_x = 0.0;
  double psi_o = 0.0;
};

struct BalanceSeries {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  int w = 0;
  Mode mode = Mode::accelerated;
  std::vector<BalanceSample> samples;
  /// First time the impatient count (or, as a proxy, the unhappy count) fell
  /// below 3n/w^2; kNever if not observed.
  std::uint64_t T0 = kNever;
  bool T0_is_proxy = true;
  /// max |unhappy x - unhappy o| over every time t <= T0 (all times if T0 is undefined).
  std::size_t max_imbalance = 0;
  std::size_t initial_imbalance = 0;

  double max_imbalance_fraction() const { return static_cast<double>(max_imbalance) / static_cast<double>(n); }
  double initial_imbalance_fraction() const {
    return static_cast<double>(initial_imbalance) / static_cast<double>(n);
  }
};

/// Records a BalanceSeries. In faithful mode it owns a SatisfactionTracker
/// and forwards the callbacks to it, so do not register that tracker separately.
class BalanceSampler : public RunObserver {
 public:
  BalanceSampler(std::uint64_t stride, std::uint64_t horizon, bool track_satisfaction)
      : times_(stride_times(stride, horizon)), track_(track_satisfaction) {}

  void on_start(const RingState& s, Mode mode) override {
    series_.n = s.n();
    series_.w = s.w();
    series_.mode = mode;
    series_.T0_is_proxy = !track_;
    if (track_) tracker_.on_start(s, mode);
    n_ = s.n();
    w_ = s.w();
    series_.initial_imbalance = imbalance(s);
    observe_imbalance(s, s.proposals());
    flush_before(s, s.proposals() + 1, false);
  }

  void before_proposal(const RingState& s, std::size_t a, std::size_t b, std::uint64_t t) override {
    flush_before(s, t, false);
    if (track_) tracker_.before_proposal(s, a, b, t);
  }

  void after_event(const RingState& s, const SwapEvent& ev) override {
    if (track_) tracker_.after_event(s, ev);
    observe_imbalance(s, ev.step);
    while (next_ < times_.size() && times_[next_] == ev.step) record(s, times_[next_++], true);
  }

  void on_finish(const RingState& s, const RunReport& report) override {
    if (track_) tracker_.on_finish(s, report);
    const std::uint64_t end = s.frozen() ? std::numeric_limits<std::uint64_t>::max() : report.proposals + 1;
    flush_before(s, end, false);
    if (track_) {
      series_.T0 = tracker_.T0();
    } else if (series_.T0 == kNever && below(s.unhappy_count())) {
      series_.T0 = s.proposals();
    }
  }

  const BalanceSeries& series() const noexcept { return series_; }
  BalanceSeries& series() noexcept { return series_; }
  const SatisfactionTracker& tracker() const noexcept { return tracker_; }

 private:
  static std::size_t imbalance(const RingState& s) {
    const auto ux = s.unhappy(Mark::x).size();
    const auto uo = s.unhappy(Mark::o).size();
    return ux > uo ? ux - uo : uo - ux;
  }

  bool below(std::size_t count) const {
    return count * static_cast<std::size_t>(w_) * static_cast<std::size_t>(w_) < 3 * n_;
  }

  void observe_imbalance(const RingState& s, std::uint64_t t) {
    const bool open = track_ ? tracker_.T0() == kNever || tracker_.T0() >= t : series_.T0 == kNever;
    if (open) series_.max_imbalance = std::max(series_.max_imbalance, imbalance(s));
    if (!track_ && series_.T0 == kNever && below(s.unhappy_count())) series_.T0 = t;
  }

  void flush_before(const RingState& s, std::uint64_t t, bool at_event) {
    while (next_ < times_.size() && times_[next_] < t) record(s, times_[next_++], at_event);
  }

  void record(const RingState& s, std::uint64_t t, bool at_event) {
    BalanceSample b;
    const double n = static_cast<double>(s.n());
    b.t = t;
    b.unhappy_x = s.unhappy(Mark::x).size();
    b.unhappy_o = s.unhappy(Mark::o).size();
    b.psi_x = static_cast<double>(b.unhappy_x) / n;
    b.psi_o = static_cast<double>(b.unhappy_o) / n;
    if (track_) {
      b.impatient = static_cast<long long>(at_event ? tracker_.impatient_now() : tracker_.impatient_between());
      b.phi_x = static_cast<double>(tracker_.pending(Mark::x)) / n;
      b.phi_o = static_cast<double>(tracker_.pending(Mark::o)) / n;
    }
    series_.samples.push_back(b);
  }

  std::vector<std::uint64_t> times_;
  std::size_t next_ = 0;
  bool track_;
  std::size_t n_ = 0;
  int w_ = 1;
  SatisfactionTracker tracker_;
  BalanceSeries series_;
};

/// Linear-interpolation quantile (q in [0, 1]) of a non-empty sample.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

/// Ordinary least-squares slope of y on x.
inline double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx == 0.0 ? std::nan("") : sxy / sxx;
}

inline constexpr std::array<double, 4> kTailLambdas{1.0, 2.0, 4.0, 8.0};

struct RunlengthRow {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  int w = 0;
  double mean_run = 0.0;
  std::array<double, 4> p_tail{};
  bool frozen = false;
  std::uint64_t proposals = 0;
  std::uint64_t swaps = 0;
};

inline RunlengthRow runlength_row(std::uint64_t seed, const Labeling& final_labeling, int w) {
  const auto stats = run_lengths(final_labeling);
  RunlengthRow r;
  r.seed = seed;
  r.n = final_labeling.size();
  r.w = w;
  r.mean_run = stats.mean_run_value();
  const auto tail = stats.tail_profile(w, kTailLambdas);
  std::copy(tail.begin(), tail.end(), r.p_tail.begin());
  return r;
}

struct RunlengthGroup {
  std::size_t n = 0;
  int w = 0;
  std::size_t runs = 0;
  double mean_run = 0.0;
  std::array<double, 4> p_tail{};
  /// Slope of log P(run > lambda w^2) against lambda, over the lambdas with P > 0.
  double tail_slope = std::nan("");
  std::size_t tail_points = 0;
};

struct RunlengthStability {
  int w = 0;
  std::size_t n_small = 0;
  std::size_t n_large = 0;
  double ratio = std::nan("");
};

struct RunlengthSummary {
  std::vector<RunlengthGroup> groups;
  std::vector<RunlengthStability> stability;
  /// Some w had fewer than two distinct n values.
  bool insufficient_data = false;
};

inline RunlengthSummary summarize_runlength(std::span<const RunlengthRow> rows) {
  RunlengthSummary out;
  std::vector<std::pair<int, std::size_t>> keys;
  for (const auto& r : rows) keys.emplace_back(r.w, r.n);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  for (const auto& [w, n] : keys) {
    RunlengthGroup g;
    g.n = n;
    g.w = w;
    std::vector<double> means;
    for (const auto& r : rows) {
      if (r.w != w || r.n != n) continue;
      means.push_back(r.mean_run);
      for (std::size_t k = 0; k < 4; ++k) g.p_tail[k] += r.p_tail[k];
    }
    g.runs = means.size();
    g.mean_run = mean_of(means);
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < 4; ++k) {
      g.p_tail[k] /= static_cast<double>(g.runs);
      if (g.p_tail[k] > 0.0) {
        xs.push_back(kTailLambdas[k]);
        ys.push_back(std::log(g.p_tail[k]));
      }
    }
    g.tail_points = xs.size();
    if (xs.size() >= 2) g.tail_slope = least_squares_slope(xs, ys);
    out.groups.push_back(g);
  }
  for (std::size_t i = 0; i < out.groups.size();) {
    std::size_t j = i;
    while (j < out.groups.size() && out.groups[j].w == out.groups[i].w) ++j;
    if (j - i < 2) {
      out.insufficient_data = true;
    } else {
      const auto& small = out.groups[i];
      const auto& large = out.groups[j - 1];
      out.stability.push_back({small.w, small.n, large.n, large.mean_run / small.mean_run});
    }
    i = j;
  }
  return out;
}

struct BalanceGroup {
  std::size_t n = 0;
  int w = 0;
  std::size_t runs = 0;
  double p95_max_imbalance = 0.0;
  double median_max_imbalance = 0.0;
  double mean_initial_imbalance = 0.0;
  std::size_t T0_observed = 0;
};

struct BalanceScaling {
  int w = 0;
  std::size_t n_small = 0;
  std::size_t n_large = 0;
  bool p95_decreases = false;
  /// Ratio of mean t=0 imbalance fractions, small n over large n.
  double clt_ratio = std::nan("");
  /// sqrt(n_large / n_small).
  double clt_prediction = std::nan("");
  bool clt_within_factor_two = false;
};

struct BalanceSummary {
  std::vector<BalanceGroup> groups;
  std::vector<BalanceScaling> scaling;
};

inline BalanceSummary summarize_balance(std::span<const BalanceSeries> set) {
  BalanceSummary out;
  std::vector<std::pair<int, std::size_t>> keys;
  for (const auto& s : set) keys.emplace_back(s.w, s.n);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  for (const auto& [w, n] : keys) {
    BalanceGroup g;
    g.n = n;
    g.w = w;
    std::vector<double> maxes, initial;
    for (const auto& s : set) {
      if (s.w != w || s.n != n) continue;
      maxes.push_back(s.max_imbalance_fraction());
      initial.push_back(s.initial_imbalance_fraction());
      if (s.T0 != kNever) ++g.T0_observed;
    }
    g.runs = maxes.size();
    g.p95_max_imbalance = quantile(maxes, 0.95);
    g.median_max_imbalance = quantile(maxes, 0.5);
    g.mean_initial_imbalance = mean_of(initial);
    out.groups.push_back(g);
  }
  for (std::size_t i = 0; i < out.groups.size();) {
    std::size_t j = i;
    while (j < out.groups.size() && out.groups[j].w == out.groups[i].w) ++j;
    if (j - i >= 2) {
      const auto& small = out.groups[i];
      const auto& large = out.groups[j - 1];
      BalanceScaling sc;
      sc.w = small.w;
      sc.n_small = small.n;
      sc.n_large = large.n;
      sc.p95_decreases = large.p95_max_imbalance < small.p95_max_imbalance;
      sc.clt_ratio = small.mean_initial_imbalance / large.mean_initial_imbalance;
      sc.clt_prediction = std::sqrt(static_cast<double>(large.n) / static_cast<double>(small.n));
      sc.clt_within_factor_two =
          sc.clt_ratio >= sc.clt_prediction / 2.0 && sc.clt_ratio <= sc.clt_prediction * 2.0;
      out.scaling.push_back(sc);
    }
    i = j;
  }
  return out;
}

/// Minimal CSV writer with locale-independent number formatting.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) body_ << ',';
      body_ << header[i];
    }
    body_ << '\n';
  }

  CsvWriter& cell(const std::string& s) {
    sep();
    body_ << s;
    return *this;
  }
  CsvWriter& cell(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return cell(std::string(buf));
  }
  CsvWriter& cell(std::uint64_t v) { return cell(std::to_string(v)); }
  CsvWriter& cell(int v) { return cell(std::to_string(v)); }
  CsvWriter& cell(long long v) { return cell(std::to_string(v)); }
  CsvWriter& cell(bool v) { return cell(std::string(v ? "1" : "0")); }
  void end_row() {
    body_ << '\n';
    fresh_ = true;
  }

  std::string str() const { return body_.str(); }
  void save(const std::filesystem::path& p) const {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << body_.str();
  }

 private:
  void sep() {
    if (!fresh_) body_ << ',';
    fresh_ = false;
  }
  std::ostringstream body_;
  bool fresh_ = true;
};

enum class ExperimentKind { runlength, balance, incubator, ode_compare, couple, ballot_sweep };

inline ExperimentKind parse_kind(const std::string& s) {
  if (s == "runlength") return ExperimentKind::runlength;
  if (s == "balance") return ExperimentKind::balance;
  if (s == "incubator") return ExperimentKind::incubator;
  if (s == "ode-compare") return ExperimentKind::ode_compare;
  if (s == "couple") return ExperimentKind::couple;
  if (s == "ballot-sweep") return ExperimentKind::ballot_sweep;
  throw ParameterError("unknown experiment kind '" + s + "'");
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::runlength;
  std::string kind_name = "runlength";
  std::uint64_t master_seed = 1;
  std::size_t seeds = 1;
  std::vector<std::size_t> n;
  std::vector<int> w;
  std::vector<std::size_t> L;
  Mode mode = Mode::accelerated;
  std::uint64_t max_proposals = 0;
  std::uint64_t max_swaps = 0;
  double stride_fraction = 0.01;
  double horizon_fraction = 1.0;
  double h = 1e-3;
  double x_max = 1.0;
  int samples = 20;
  double tolerance = 0.01;
  std::vector<double> checkpoints{0.25, 0.5, 1.0};
  int a_max = 10;
  int b_max = 10;
  std::string output_dir = "out";
  nlohmann::json source;

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.source = j;
    c.kind_name = j.at("kind").get<std::string>();
    c.kind = parse_kind(c.kind_name);
    c.master_seed = j.value("master_seed", std::uint64_t{1});
    c.seeds = j.value("seeds", std::size_t{1});
    if (c.seeds == 0) throw ParameterError("seed list must be non-empty");
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.n = g.value("n", std::vector<std::size_t>{});
      c.w = g.value("w", std::vector<int>{});
      c.L = g.value("L", std::vector<std::size_t>{});
    }
    c.mode = parse_mode(j.value("mode", std::string(c.kind == ExperimentKind::runlength ||
                                                            c.kind == ExperimentKind::balance
                                                        ? "accelerated"
                                                        : "faithful")));
    const auto defaults =
        c.mode == Mode::faithful ? RunOptions::faithful_defaults() : RunOptions::accelerated_defaults();
    c.max_proposals = defaults.max_proposals;
    c.max_swaps = defaults.max_swaps;
    if (j.contains("budget")) {
      c.max_proposals = j["budget"].value("max_proposals", c.max_proposals);
      c.max_swaps = j["budget"].value("max_swaps", c.max_swaps);
    }
    if (j.contains("sampling")) {
      c.stride_fraction = j["sampling"].value("stride_fraction", c.stride_fraction);
      c.horizon_fraction = j["sampling"].value("horizon_fraction", c.horizon_fraction);
    }
    if (j.contains("ode")) {
      const auto& o = j["ode"];
      c.h = o.value("h", c.h);
      c.x_max = o.value("x_max", c.x_max);
      c.samples = o.value("samples", c.samples);
      c.tolerance = o.value("tolerance", c.tolerance);
    }
    if (j.contains("couple")) c.checkpoints = j["couple"].value("checkpoints", c.checkpoints);
    if (j.contains("ballot")) {
      c.a_max = j["ballot"].value("a_max", c.a_max);
      c.b_max = j["ballot"].value("b_max", c.b_max);
    }
    if (j.contains("output")) c.output_dir = j["output"].value("dir", c.output_dir);
    c.validate();
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw ParameterError("cannot open config " + p.string());
    return from_json(nlohmann::json::parse(f));
  }

  void validate() const {
    const auto need = [](bool ok, const char* what) {
      if (!ok) throw ParameterError(what);
    };
    switch (kind) {
      case ExperimentKind::ballot_sweep:
        need(a_max >= 0 && b_max >= 0 && a_max + b_max <= kBallotEnumerationLimit,
             "ballot sweep needs 0 <= a_max, b_max and a_max + b_max <= 24");
        return;
      case ExperimentKind::ode_compare:
      case ExperimentKind::couple:
        need(!L.empty(), "grid.L must be non-empty");
        break;
      default:
        break;
    }
    need(!n.empty() && !w.empty(), "grid.n and grid.w must be non-empty");
    for (auto nn : n) {
      for (int ww : w) {
        validate_parameters(Topology::cycle(nn), ww);
        for (auto ll : L) validate_parameters(Topology::disjoint_rings(nn, ll), ww);
      }
    }
    if (kind == ExperimentKind::ode_compare)
      for (auto ll : L) meanfield::check_ring(static_cast<int>(ll), w.front(), meanfield::kDefaultMaxRingLength);
    if ((kind == ExperimentKind::incubator || kind == ExperimentKind::couple ||
         kind == ExperimentKind::ode_compare) && mode != Mode::faithful)
      throw ParameterError("this experiment kind needs faithful mode");
  }

  RunOptions run_options() const { return RunOptions{mode, max_proposals, max_swaps, true}; }
};

/// Worker count from SCHELLING_WORKERS, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("SCHELLING_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs task(k) for k in [0, count) on `workers` threads. Exceptions are
/// captured per task and returned as messages (empty string on success).
inline std::vector<std::string> parallel_for(std::size_t count, unsigned workers,
                                             const std::function<void(std::size_t)>& task) {
  std::vector<std::string> errors(count);
  std::atomic<std::size_t> next{0};
  const auto body = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < count;) {
      try {
        task(k);
      } catch (const std::exception& e) {
        errors[k] = e.what();
        if (errors[k].empty()) errors[k] = "error";
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), count));
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  return errors;
}

struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  std::vector<Assertion> assertions;
  std::vector<std::string> failures;  // "grid:seed: message"
  nlohmann::json summary;
  double wall_seconds = 0.0;

  bool all_passed() const {
    if (!failures.empty()) return false;
    return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.passed; });
  }
};

namespace detail {

struct Task {
  std::size_t grid = 0;
  std::size_t n = 0;
  int w = 0;
  std::size_t L = 0;
  std::uint64_t seed = 0;  // run index within the grid point
};

inline std::vector<Task> expand(const ExperimentConfig& c) {
  std::vector<Task> out;
  std::size_t grid = 0;
  const std::vector<std::size_t> Ls = c.L.empty() ? std::vector<std::size_t>{0} : c.L;
  for (auto n : c.n)
    for (int w : c.w)
      for (auto L : Ls) {
        for (std::uint64_t s = 0; s < c.seeds; ++s) out.push_back({grid, n, w, L, s});
        ++grid;
      }
  return out;
}

inline RandomSource task_rng(const ExperimentConfig& c, const Task& t) {
  return RandomSource(c.master_seed, (static_cast<std::uint64_t>(t.grid) << 32) | t.seed);
}

inline std::string stamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  return std::to_string(secs);
}

}  // namespace detail

/// Mean-field comparison row: one per (seed, sample x).
struct OdeCompareRow {
  std::uint64_t seed = 0;
  double x = 0.0;
  double sup_error = 0.0;
  double delta_ode = 0.0;
  double delta_mc = 0.0;
  double sum_z = 0.0;
};

/// Simulates the disjoint-rings process from z0's realisation and compares its
/// empirical state vector with the ODE trajectory at x = t/n.
inline std::vector<OdeCompareRow> ode_compare_run(std::size_t n, std::size_t L, int w, double h,
                                                  double x_max, int samples, RandomSource& rng,
                                                  std::uint64_t seed_label = 0) {
  auto state = init_random_rings(n, L, w, rng);
  const auto table = meanfield::build_drift_table(static_cast<int>(L), w, meanfield::kDefaultMaxRingLength);
  const auto z0 = meanfield::empirical_state_vector(state);
  std::vector<double> xs;
  std::vector<std::uint64_t> ts;
  for (int k = 0; k <= samples; ++k) {
    const auto t = static_cast<std::uint64_t>(std::llround(x_max * static_cast<double>(n) * k / samples));
    ts.push_back(t);
    xs.push_back(static_cast<double>(t) / static_cast<double>(n));
  }
  const auto traj = meanfield::integrate(z0, table, h, xs);
  std::vector<OdeCompareRow> rows;
  ScheduledSampler sampler(ts, [&](const RingState& s, std::uint64_t t, bool) {
    const auto k = rows.size();
    const auto mc = meanfield::empirical_state_vector(s);
    OdeCompareRow r;
    r.seed = seed_label;
    r.x = static_cast<double>(t) / static_cast<double>(n);
    r.sup_error = meanfield::sup_distance(mc, traj.z[k]);
    r.delta_ode = meanfield::delta(traj.z[k]);
    r.delta_mc = meanfield::delta(mc);
    r.sum_z = traj.z[k].sum();
    rows.push_back(r);
  });
  RunOptions opts{Mode::faithful, ts.back(), 0, true};
  RunObserver* obs[] = {&sampler};
  run_to_frozen(state, rng, opts, obs);
  return rows;
}

struct CoupleRow {
  std::uint64_t seed = 0;
  std::uint64_t t = 0;
  std::size_t d = 0;
  double bound = 0.0;
  bool within_bound = false;
  bool neighbourhoods_ok = false;
};

/// Drives a coupled pair for max(checkpoints) * n steps, checking the
/// untainted-neighbourhood invariant after every step.
inline std::vector<CoupleRow> couple_run(std::size_t n, std::size_t L, int w,
                                         std::span<const double> checkpoints, RandomSource& rng,
                                         std::uint64_t seed_label = 0,
                                         TaintSeed taint_seed = TaintSeed::inner_classes) {
  auto cs = init_coupled(n, L, w, rng, taint_seed);
  std::vector<std::uint64_t> ts;
  for (double c : checkpoints) ts.push_back(static_cast<std::uint64_t>(std::llround(c * static_cast<double>(n))));
  std::sort(ts.begin(), ts.end());
  std::vector<CoupleRow> rows;
  bool neighbourhoods_ok = neighbourhood_violations(cs) == 0;
  std::size_t next = 0;
  const auto emit = [&] {
    while (next < ts.size() && ts[next] == cs.steps()) {
      const auto rep = taint_report(cs);
      rows.push_back({seed_label, rep.t, rep.d, rep.bound, rep.within_bound, neighbourhoods_ok});
      ++next;
    }
  };
  emit();
  while (next < ts.size()) {
    coupled_step(cs, rng);
    if (neighbourhoods_ok && !cs.differing().empty()) neighbourhoods_ok = neighbourhood_violations(cs) == 0;
    emit();
  }
  return rows;
}

/// Disjoint 6w-blocks of a ring of size n (the tail shorter than 6w is dropped).
inline std::vector<Block> six_w_blocks(std::size_t n, int w) {
  std::vector<Block> out;
  const auto len = static_cast<std::size_t>(6 * w);
  for (std::size_t s = 0; s + len <= n; s += len) out.push_back(Block{s, len});
  return out;
}

struct IncubatorRow {
  std::uint64_t seed = 0;
  int w = 0;
  std::size_t block_start = 0;
  bool has_incubator = false;
  bool left_nonneg = false;
  bool right_nonneg = false;
  bool became_firewall = false;
  bool impatient_at_T0 = false;
  /// Some incubator in the block has non-negative pseudo-transcripts on both sides.
  bool joint = false;
  std::size_t implication_failures = 0;
};

/// One faithful run; every x-incubator found inside a 6w-block is followed.
inline std::vector<IncubatorRow> incubator_run(std::size_t n, int w, RandomSource& rng,
                                               const RunOptions& opts, std::uint64_t seed_label = 0) {
  auto state = init_random(n, w, rng);
  const auto blocks = six_w_blocks(n, w);
  std::vector<Incubator> incubators;
  std::vector<std::size_t> owner;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    for (const auto& inc : find_incubators(state.labeling(), w, blocks[k])) {
      if (inc.type != Mark::x) continue;
      incubators.push_back(inc);
      owner.push_back(k);
    }
  }
  SatisfactionTracker tracker(regions_of(incubators));
  RunObserver* obs[] = {&tracker};
  RunOptions o = opts;
  o.mode = Mode::faithful;
  run_to_frozen(state, rng, o, obs);
  const auto outcomes = check_incubator_outcomes(tracker, incubators, state.labeling());

  std::vector<IncubatorRow> rows(blocks.size());
  std::vector<char> chosen(blocks.size(), 0);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    rows[k].seed = seed_label;
    rows[k].w = w;
    rows[k].block_start = blocks[k].start;
  }
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& r = rows[owner[i]];
    const auto& o = outcomes[i];
    if (!o.implication_holds()) ++r.implication_failures;
    if (o.realized_nonnegative() && o.t0 != kNever && !o.became_firewall) ++r.implication_failures;
    r.has_incubator = true;
    // Report the first incubator of the block, or the first satisfying the joint event.
    if (!chosen[owner[i]] || (o.pseudo_nonnegative && !r.joint)) {
      chosen[owner[i]] = 1;
      r.left_nonneg = o.left_nonnegative;
      r.right_nonneg = o.right_nonnegative;
      r.became_firewall = o.became_firewall;
      r.impatient_at_T0 = o.impatient_at_T0;
      r.joint = r.joint || o.pseudo_nonnegative;
    }
  }
  return rows;
}

/// Runs a campaign and writes `<kind>.csv`, `summary.json` and
/// `manifest.json` into the output directory.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, unsigned workers = worker_count()) {
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  ExperimentResult result;
  std::vector<std::string> outputs;
  std::vector<std::string> errors;
  const auto tasks = cfg.kind == ExperimentKind::ballot_sweep ? std::vector<detail::Task>{} : detail::expand(cfg);
  const auto note_errors = [&] {
    for (std::size_t k = 0; k < errors.size(); ++k)
      if (!errors[k].empty())
        result.failures.push_back("grid " + std::to_string(tasks[k].grid) + " seed " +
                                  std::to_string(tasks[k].seed) + ": " + errors[k]);
  };

  switch (cfg.kind) {
    case ExperimentKind::runlength: {
      std::vector<RunlengthRow> rows(tasks.size());
      std::vector<char> ok(tasks.size(), 0);
      errors = parallel_for(tasks.size(), workers, [&](std::size_t k) {
        const auto& t = tasks[k];
        auto rng = detail::task_rng(cfg, t);
        auto state = init_random(t.n, t.w, rng);
        const auto rep = run_to_frozen(state, rng, cfg.run_options());
        rows[k] = runlength_row(t.seed, state.labeling(), t.w);
        rows[k].frozen = rep.frozen;
        rows[k].proposals = rep.proposals;
        rows[k].swaps = rep.swaps;
        ok[k] = 1;
      });
      note_errors();
      std::vector<RunlengthRow> good;
      CsvWriter csv({"seed", "n", "w", "mean_run", "p_tail_1", "p_tail_2", "p_tail_4", "p_tail_8",
                     "frozen", "proposals", "swaps"});
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (!ok[k]) continue;
        const auto& r = rows[k];
        good.push_back(r);
        csv.cell(r.seed).cell(static_cast<std::uint64_t>(r.n)).cell(r.w).cell(r.mean_run);
        for (double p : r.p_tail) csv.cell(p);
        csv.cell(r.frozen).cell(r.proposals).cell(r.swaps).end_row();
      }
      csv.save(dir / "runlength.csv");
      outputs.push_back("runlength.csv");
      const auto sum = summarize_runlength(good);
      CsvWriter sc({"n", "w", "runs", "mean_run", "p_tail_1", "p_tail_2", "p_tail_4", "p_tail_8", "tail_slope"});
      for (const auto& g : sum.groups) {
        sc.cell(static_cast<std::uint64_t>(g.n)).cell(g.w).cell(static_cast<std::uint64_t>(g.runs)).cell(g.mean_run);
        for (double p : g.p_tail) sc.cell(p);
        sc.cell(g.tail_slope).end_row();
        result.summary["groups"].push_back({{"n", g.n}, {"w", g.w}, {"runs", g.runs}, {"mean_run", g.mean_run},
                                            {"p_tail", g.p_tail}, {"tail_slope", g.tail_slope}});
        result.assertions.push_back({"tail slope negative (n=" + std::to_string(g.n) + ", w=" + std::to_string(g.w) + ")",
                                     g.tail_points >= 2 && g.tail_slope < 0.0, std::to_string(g.tail_slope)});
      }
      sc.save(dir / "runlength_summary.csv");
      outputs.push_back("runlength_summary.csv");
      for (const auto& s : sum.stability) {
        result.summary["stability"].push_back({{"w", s.w}, {"n_small", s.n_small}, {"n_large", s.n_large}, {"ratio", s.ratio}});
        result.assertions.push_back({"run length stable across n (w=" + std::to_string(s.w) + ")",
                                     s.ratio >= 0.9 && s.ratio <= 1.1, std::to_string(s.ratio)});
      }
      result.summary["insufficient_data"] = sum.insufficient_data;
      break;
    }
    case ExperimentKind::balance: {
      std::vector<BalanceSeries> series(tasks.size());
      std::vector<char> ok(tasks.size(), 0);
      errors = parallel_for(tasks.size(), workers, [&](std::size_t k) {
        const auto& t = tasks[k];
        auto rng = detail::task_rng(cfg, t);
        auto state = init_random(t.n, t.w, rng);
        const auto stride = static_cast<std::uint64_t>(std::max(1.0, cfg.stride_fraction * static_cast<double>(t.n)));
        const auto horizon = static_cast<std::uint64_t>(cfg.horizon_fraction * static_cast<double>(t.n));
        BalanceSampler sampler(stride, horizon, cfg.mode == Mode::faithful);
        RunObserver* obs[] = {&sampler};
        run_to_frozen(state, rng, cfg.run_options(), obs);
        series[k] = sampler.series();
        series[k].seed = t.seed;
        ok[k] = 1;
      });
      note_errors();
      std::vector<BalanceSeries> good;
      CsvWriter csv({"seed", "n", "w", "t", "unhappy_x", "unhappy_o", "impatient", "phi_x", "phi_o", "psi_x", "psi_o"});
      CsvWriter runs({"seed", "n", "w", "T0", "T0_proxy", "max_imbalance", "initial_imbalance"});
      for (std::size_t k = 0; k < series.size(); ++k) {
        if (!ok[k]) continue;
        const auto& s = series[k];
        good.push_back(s);
        for (const auto& b : s.samples) {
          csv.cell(s.seed).cell(static_cast<std::uint64_t>(s.n)).cell(s.w).cell(b.t)
              .cell(static_cast<std::uint64_t>(b.unhappy_x)).cell(static_cast<std::uint64_t>(b.unhappy_o))
              .cell(b.impatient).cell(b.phi_x).cell(b.phi_o).cell(b.psi_x).cell(b.psi_o).end_row();
        }
        runs.cell(s.seed).cell(static_cast<std::uint64_t>(s.n)).cell(s.w)
            .cell(s.T0 == kNever ? std::string("") : std::to_string(s.T0)).cell(s.T0_is_proxy)
            .cell(static_cast<std::uint64_t>(s.max_imbalance)).cell(static_cast<std::uint64_t>(s.initial_imbalance)).end_row();
      }
      csv.save(dir / "balance.csv");
      runs.save(dir / "balance_runs.csv");
      outputs.push_back("balance.csv");
      outputs.push_back("balance_runs.csv");
      const auto sum = summarize_balance(good);
      for (const auto& g : sum.groups)
        result.summary["groups"].push_back({{"n", g.n}, {"w", g.w}, {"runs", g.runs},
                                            {"p95_max_imbalance", g.p95_max_imbalance},
                                            {"median_max_imbalance", g.median_max_imbalance},
                                            {"mean_initial_imbalance", g.mean_initial_imbalance},
                                            {"T0_observed", g.T0_observed}});
      for (const auto& s : sum.scaling) {
        result.summary["scaling"].push_back({{"w", s.w}, {"n_small", s.n_small}, {"n_large", s.n_large},
                                             {"p95_decreases", s.p95_decreases}, {"clt_ratio", s.clt_ratio},
                                             {"clt_prediction", s.clt_prediction}});
        result.assertions.push_back({"p95 imbalance decreases (w=" + std::to_string(s.w) + ")", s.p95_decreases, ""});
        result.assertions.push_back({"t=0 imbalance follows n^-1/2 (w=" + std::to_string(s.w) + ")",
                                     s.clt_within_factor_two, std::to_string(s.clt_ratio)});
      }
      result.summary["T0_proxy"] = cfg.mode != Mode::faithful;
      break;
    }
    case ExperimentKind::incubator: {
      std::vector<std::vector<IncubatorRow>> rows(tasks.size());
      errors = parallel_for(tasks.size(), workers, [&](std::size_t k) {
        const auto& t = tasks[k];
        auto rng = detail::task_rng(cfg, t);
        rows[k] = incubator_run(t.n, t.w, rng, cfg.run_options(), t.seed);
      });
      note_errors();
      CsvWriter csv({"seed", "w", "block_start", "has_incubator", "left_nonneg", "right_nonneg",
                     "became_firewall", "impatient_at_T0", "joint"});
      std::size_t violations = 0;
      std::map<int, std::array<std::size_t, 3>> per_w;  // blocks, with incubator, joint
      for (const auto& run : rows) {
        for (const auto& r : run) {
          csv.cell(r.seed).cell(r.w).cell(static_cast<std::uint64_t>(r.block_start)).cell(r.has_incubator)
              .cell(r.left_nonneg).cell(r.right_nonneg).cell(r.became_firewall).cell(r.impatient_at_T0)
              .cell(r.joint).end_row();
          violations += r.implication_failures;
          auto& c = per_w[r.w];
          ++c[0];
          c[1] += r.has_incubator;
          c[2] += r.joint;
        }
      }
      csv.save(dir / "incubator.csv");
      outputs.push_back("incubator.csv");
      for (const auto& [w, c] : per_w)
        result.summary["groups"].push_back({{"w", w}, {"blocks", c[0]},
                                            {"p_incubator", static_cast<double>(c[1]) / static_cast<double>(c[0])},
                                            {"p_joint", static_cast<double>(c[2]) / static_cast<double>(c[0])}});
      result.summary["implication_violations"] = violations;
      result.assertions.push_back({"non-negative transcripts imply a firewall", violations == 0,
                                   std::to_string(violations) + " violations"});
      break;
    }
    case ExperimentKind::ode_compare: {
      std::vector<std::vector<OdeCompareRow>> rows(tasks.size());
      errors = parallel_for(tasks.size(), workers, [&](std::size_t k) {
        const auto& t = tasks[k];
        auto rng = detail::task_rng(cfg, t);
        rows[k] = ode_compare_run(t.n, t.L, t.w, cfg.h, cfg.x_max, cfg.samples, rng, t.seed);
      });
      note_errors();
      CsvWriter csv({"seed", "n", "L", "w", "x", "sup_error", "delta_ode", "delta_mc", "sum_z"});
      std::map<std::size_t, std::vector<double>> worst;  // grid -> per-seed max error
      for (std::size_t k = 0; k < rows.size(); ++k) {
        double m = 0.0;
        for (const auto& r : rows[k]) {
          csv.cell(r.seed).cell(static_cast<std::uint64_t>(tasks[k].n)).cell(static_cast<std::uint64_t>(tasks[k].L))
              .cell(tasks[k].w).cell(r.x).cell(r.sup_error).cell(r.delta_ode).cell(r.delta_mc).cell(r.sum_z).end_row();
          m = std::max(m, r.sup_error);
        }
        if (!rows[k].empty()) worst[tasks[k].grid].push_back(m);
      }
      csv.save(dir / "ode.csv");
      outputs.push_back("ode.csv");
      for (const auto& [grid, v] : worst) {
        const double avg = mean_of(v);
        result.summary["groups"].push_back({{"grid", grid}, {"mean_max_sup_error", avg}});
        result.assertions.push_back({"mean-field error within tolerance (grid " + std::to_string(grid) + ")",
                                     avg <= cfg.tolerance, std::to_string(avg)});
      }
      break;
    }
    case ExperimentKind::couple: {
      std::vector<std::vector<CoupleRow>> rows(tasks.size());
      errors = parallel_for(tasks.size(), workers, [&](std::size_t k) {
        const auto& t = tasks[k];
        auto rng = detail::task_rng(cfg, t);
        rows[k] = couple_run(t.n, t.L, t.w, cfg.checkpoints, rng, t.seed);
      });
      note_errors();
      CsvWriter csv({"seed", "t", "d", "bound", "within_bound", "neighbourhoods_agree"});
      std::map<std::uint64_t, std::array<std::size_t, 2>> per_t;
      bool agree = true;
      std::size_t broken_runs = 0;
      for (const auto& run : rows) {
        broken_runs += std::any_of(run.begin(), run.end(), [](const CoupleRow& r) { return !r.neighbourhoods_ok; });
        for (const auto& r : run) {
          csv.cell(r.seed).cell(r.t).cell(static_cast<std::uint64_t>(r.d)).cell(r.bound).cell(r.within_bound)
              .cell(r.neighbourhoods_ok).end_row();
          auto& c = per_t[r.t];
          ++c[0];
          c[1] += r.within_bound;
          agree = agree && r.neighbourhoods_ok;
        }
      }
      csv.save(dir / "couple.csv");
      outputs.push_back("couple.csv");
      for (const auto& [t, c] : per_t) {
        const double frac = static_cast<double>(c[1]) / static_cast<double>(c[0]);
        result.summary["checkpoints"].push_back({{"t", t}, {"runs", c[0]}, {"within_bound", c[1]}});
        result.assertions.push_back({"taint within bound at t=" + std::to_string(t), frac >= 0.95, std::to_string(frac)});
      }
      result.summary["runs_with_differing_neighbourhoods"] = broken_runs;
      result.assertions.push_back({"untainted neighbourhoods agree", agree,
                                   std::to_string(broken_runs) + "/" + std::to_string(rows.size()) + " runs differ"});
      break;
    }
    case ExperimentKind::ballot_sweep: {
      CsvWriter csv({"a", "b", "formula", "enumerated", "agree"});
      bool all = true;
      for (int a = 0; a <= cfg.a_max; ++a)
        for (int b = 0; b <= cfg.b_max; ++b) {
          if (a + b == 0) continue;
          const auto f = ballot_probability({a, b});
          const auto e = ballot_enumerate({a, b});
          const auto fmt = [](const Rational& r) {
            return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
          };
          csv.cell(a).cell(b).cell(fmt(f)).cell(fmt(e)).cell(f == e).end_row();
          all = all && f == e;
        }
      csv.save(dir / "ballot.csv");
      outputs.push_back("ballot.csv");
      result.assertions.push_back({"ballot formula equals enumeration", all, ""});
      break;
    }
  }

  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  nlohmann::json assertions = nlohmann::json::array();
  for (const auto& a : result.assertions)
    assertions.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  result.summary["kind"] = cfg.kind_name;
  result.summary["assertions"] = assertions;
  {
    std::ofstream f(dir / "summary.json");
    f << result.summary.dump(2) << '\n';
  }
  nlohmann::json manifest = {{"version", kVersion},
                             {"config", cfg.source},
                             {"workers", workers},
                             {"tasks", tasks.size()},
                             {"wall_seconds", result.wall_seconds},
                             {"finished_at", detail::stamp()},
                             {"outputs", outputs},
                             {"failures", result.failures},
                             {"all_passed", result.all_passed()}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  return result;
}

}  // namespace schelling
