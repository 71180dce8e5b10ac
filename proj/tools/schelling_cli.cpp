#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "schelling/schelling.hpp"

using namespace schelling;

namespace {

struct SimulateArgs {
  std::size_t n = 1000;
  int w = 2;
  std::size_t L = 0;
  std::string mode = "accelerated";
  std::uint64_t seed = 1;
  std::uint64_t max_proposals = 0;
  std::uint64_t max_swaps = 0;
  std::string labeling;
  bool literal = false;
};

int simulate(const SimulateArgs& a) {
  RandomSource rng(a.seed);
  const Mode mode = parse_mode(a.mode);
  auto state = [&] {
    if (!a.labeling.empty()) {
      auto lab = Labeling::parse(a.labeling);
      const auto n = lab.size();
      return RingState(std::move(lab), a.L ? Topology::disjoint_rings(n, a.L) : Topology::cycle(n), a.w);
    }
    return a.L ? init_random_rings(a.n, a.L, a.w, rng) : init_random(a.n, a.w, rng);
  }();
  auto opts = mode == Mode::faithful ? RunOptions::faithful_defaults() : RunOptions::accelerated_defaults();
  if (a.max_proposals) opts.max_proposals = a.max_proposals;
  if (a.max_swaps) opts.max_swaps = a.max_swaps;
  opts.skip_inert = !a.literal;
  const auto initial = run_lengths(state.labeling());
  const auto report = run_to_frozen(state, rng, opts);
  const auto stats = run_lengths(state.labeling());
  const auto census = firewall_census(stats, state.w());
  auto j = to_json(report);
  j["seed"] = a.seed;
  j["initial_mean_run"] = initial.mean_run_value();
  j["final_mean_run"] = stats.mean_run_value();
  j["runs"] = stats.run_count();
  j["x_firewalls"] = census.x_firewalls;
  j["o_firewalls"] = census.o_firewalls;
  j["firewall_members"] = census.members;
  if (state.n() <= 200) j["final_labeling"] = state.labeling().str();
  std::cout << j.dump(2) << '\n';
  return 0;
}

int experiment(const std::string& path, unsigned workers) {
  const auto cfg = ExperimentConfig::load(path);
  const auto res = run_experiment(cfg, workers ? workers : worker_count());
  for (const auto& a : res.assertions)
    std::cout << (a.passed ? "PASS " : "FAIL ") << a.name << (a.detail.empty() ? "" : " (" + a.detail + ")") << '\n';
  for (const auto& f : res.failures) std::cout << "ERROR " << f << '\n';
  std::cout << "outputs in " << cfg.output_dir << " (" << res.wall_seconds << " s)\n";
  return res.all_passed() ? 0 : 1;
}

struct OdeArgs {
  int L = 6;
  int w = 2;
  double h = 1e-3;
  double x_max = 1.0;
  int samples = 20;
  std::vector<std::uint64_t> compare;  // N SEED
};

int ode(const OdeArgs& a) {
  CsvWriter csv({"x", "sup_error", "delta_ode", "delta_mc", "sum_z"});
  if (a.compare.empty()) {
    // Mean of a uniformly random labeling.
    meanfield::StateVector z0(a.L, a.w);
    for (auto& v : z0.z) v = 1.0 / static_cast<double>(z0.size());
    const auto table = meanfield::build_drift_table(a.L, a.w);
    const auto traj = meanfield::integrate(z0, table, a.h, a.x_max, a.samples);
    for (std::size_t k = 0; k < traj.x.size(); ++k)
      csv.cell(traj.x[k]).cell(std::string("")).cell(meanfield::delta(traj.z[k])).cell(std::string(""))
          .cell(traj.z[k].sum()).end_row();
  } else {
    if (a.compare.size() != 2) throw CLI::ValidationError("--compare-mc", "expects N SEED");
    RandomSource rng(a.compare[1]);
    const auto rows = ode_compare_run(a.compare[0], static_cast<std::size_t>(a.L), a.w, a.h, a.x_max, a.samples, rng,
                                      a.compare[1]);
    for (const auto& r : rows) csv.cell(r.x).cell(r.sup_error).cell(r.delta_ode).cell(r.delta_mc).cell(r.sum_z).end_row();
  }
  std::cout << csv.str();
  return 0;
}

struct CoupleArgs {
  std::size_t n = 60000;
  std::size_t L = 60;
  int w = 2;
  std::uint64_t seed = 1;
  std::vector<double> checkpoints{0.25, 0.5, 1.0};
  std::string taint = "inner";
};

int couple(const CoupleArgs& a) {
  RandomSource rng(a.seed);
  const auto rule = a.taint == "crossing" ? TaintSeed::crossing_windows : TaintSeed::inner_classes;
  const auto rows = couple_run(a.n, a.L, a.w, a.checkpoints, rng, a.seed, rule);
  CsvWriter csv({"t", "d", "bound", "within_bound", "neighbourhoods_agree"});
  bool ok = true;
  for (const auto& r : rows) {
    csv.cell(r.t).cell(static_cast<std::uint64_t>(r.d)).cell(r.bound).cell(r.within_bound).cell(r.neighbourhoods_ok).end_row();
    ok = ok && r.within_bound && r.neighbourhoods_ok;
  }
  std::cout << csv.str();
  return ok ? 0 : 1;
}

int ballot(int a, int b, bool enumerate) {
  const auto fmt = [](const Rational& r) {
    std::ostringstream s;
    s << r.numerator() << '/' << r.denominator();
    return s.str();
  };
  const auto f = ballot_probability({a, b});
  std::cout << "formula " << fmt(f) << '\n';
  if (!enumerate) return 0;
  const auto e = ballot_enumerate({a, b});
  std::cout << "enumerated " << fmt(e) << '\n' << "agree " << (f == e ? "yes" : "no") << '\n';
  return f == e ? 0 : 1;
}

struct ScanArgs {
  std::size_t n = 5000;
  int w = 4;
  std::uint64_t seed = 1;
  bool run = false;
};

int incubator_scan(const ScanArgs& a) {
  RandomSource rng(a.seed);
  CsvWriter csv({"seed", "w", "block_start", "has_incubator", "left_nonneg", "right_nonneg", "became_firewall",
                 "impatient_at_T0", "joint"});
  std::size_t failures = 0;
  if (a.run) {
    for (const auto& r : incubator_run(a.n, a.w, rng, RunOptions::faithful_defaults(), a.seed)) {
      csv.cell(r.seed).cell(r.w).cell(static_cast<std::uint64_t>(r.block_start)).cell(r.has_incubator)
          .cell(r.left_nonneg).cell(r.right_nonneg).cell(r.became_firewall).cell(r.impatient_at_T0).cell(r.joint).end_row();
      failures += r.implication_failures;
    }
  } else {
    const auto lab = Labeling::uniform(a.n, rng);
    for (const auto& b : six_w_blocks(a.n, a.w)) {
      bool has = false;
      for (const auto& inc : find_incubators(lab, a.w, b)) has = has || inc.type == Mark::x;
      csv.cell(a.seed).cell(a.w).cell(static_cast<std::uint64_t>(b.start)).cell(has).cell(std::string(""))
          .cell(std::string("")).cell(std::string("")).cell(std::string("")).cell(std::string("")).end_row();
    }
  }
  std::cout << csv.str();
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-dimensional Schelling segregation simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  int code = 0;

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run one simulation to a frozen configuration");
  s->add_option("--n", sim.n, "Number of sites");
  s->add_option("--w", sim.w, "Window radius");
  s->add_option("--L", sim.L, "Split into disjoint rings of this length");
  s->add_option("--mode", sim.mode, "faithful or accelerated")->check(CLI::IsMember({"faithful", "accelerated"}));
  s->add_option("--seed", sim.seed, "Master seed");
  s->add_option("--max-proposals", sim.max_proposals, "Proposal budget");
  s->add_option("--max-swaps", sim.max_swaps, "Swap budget");
  s->add_option("--labeling", sim.labeling, "Forced initial labeling, a string of x and o");
  s->add_flag("--literal", sim.literal, "Faithful mode: draw every proposal instead of skipping inert ones");
  s->callback([&] { code = simulate(sim); });

  std::string config;
  unsigned workers = 0;
  auto* e = app.add_subcommand("experiment", "Run a campaign described by a JSON config");
  e->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  e->add_option("--workers", workers, "Worker threads (default: SCHELLING_WORKERS or all cores)");
  e->callback([&] { code = experiment(config, workers); });

  OdeArgs od;
  auto* o = app.add_subcommand("ode", "Integrate the mean-field equations");
  o->set_help_flag("--help", "Print this help message and exit");
  o->add_option("--ring-length", od.L, "Ring length L");
  o->add_option("--w", od.w, "Window radius");
  o->add_option("--h", od.h, "Step size in rescaled time");
  o->add_option("--x-max", od.x_max, "Horizon in rescaled time");
  o->add_option("--samples", od.samples, "Number of sample intervals");
  o->add_option("--compare-mc", od.compare, "Compare with a simulation: N SEED")->expected(2);
  o->callback([&] { code = ode(od); });

  CoupleArgs cp;
  auto* c = app.add_subcommand("couple", "Run the cycle and the disjoint rings under shared proposals");
  c->add_option("--n", cp.n, "Number of sites");
  c->add_option("--L", cp.L, "Ring length");
  c->add_option("--w", cp.w, "Window radius");
  c->add_option("--seed", cp.seed, "Seed");
  c->add_option("--checkpoints", cp.checkpoints, "Checkpoints as fractions of n")->delimiter(',');
  c->add_option("--taint", cp.taint, "Initial taint rule")->check(CLI::IsMember({"inner", "crossing"}));
  c->callback([&] { code = couple(cp); });

  int ba = 2, bb = 1;
  bool enumerate = false;
  auto* b = app.add_subcommand("ballot", "Ballot probability for a copies of +1 and b of -1");
  b->add_option("--a", ba, "Count of +1")->required();
  b->add_option("--b", bb, "Count of -1")->required();
  b->add_flag("--enumerate", enumerate, "Also count orderings explicitly");
  b->callback([&] { code = ballot(ba, bb, enumerate); });

  ScanArgs sc;
  auto* i = app.add_subcommand("incubator-scan", "Look for x-incubators in the 6w-blocks of a random ring");
  i->add_option("--n", sc.n, "Number of sites");
  i->add_option("--w", sc.w, "Window radius");
  i->add_option("--seed", sc.seed, "Seed");
  i->add_flag("--run", sc.run, "Also run the faithful process and report outcomes");
  i->callback([&] { code = incubator_scan(sc); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return code;
}
