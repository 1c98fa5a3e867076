// Acceptance suite. `omep_acceptance` runs every criterion; `omep_acceptance N`
// runs criterion N only. Prints one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "omep/experiment.hpp"
#include "omep/metrics.hpp"
#include "random_instances.hpp"

using namespace omep;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0, double e = 0,
                double g = 0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a, b, c, d, e, g);
  return buf;
}

// Example 1, exact algorithm, T = 2000, steps (20t+8)^(-1/2) and (20t+8)^(-1/3).
Outcome c1() {
  const auto start = std::chrono::steady_clock::now();
  auto cfg = default_config(1);
  cfg.horizon = 2000;
  const RunResult r = run_experiment(cfg, 1);
  const double elapsed = seconds_since(start);

  const MetricSeries& track = aggregate(r, "tracking_closed_form");
  double tail = 0.0;
  for (std::size_t t = 1501; t <= 2000; ++t) tail += track.values[t];
  tail /= 500.0;
  const MetricSeries& reg = aggregate(r, "regret_closed_form");
  const MetricSeries& vio = aggregate(r, "violation");
  const double reg_ratio = reg.over_t[2000] / reg.over_t[200];
  const double vio_ratio = vio.over_t[2000] / vio.over_t[200];

  // Diagnostics against the constrained reference solutions.
  const MetricSeries& track_o = aggregate(r, "tracking_oracle");
  double tail_o = 0.0;
  for (std::size_t t = 1501; t <= 2000; ++t) tail_o += track_o.values[t];
  tail_o /= 500.0;
  const MetricSeries& reg_o = aggregate(r, "regret_oracle");

  const bool pass = tail < 0.15 && reg_ratio <= 0.25 && vio_ratio <= 0.25 && elapsed < 10.0;
  std::string d = fmt("tail tracking %.4f (<0.15), R/t ratio %.4f (<=0.25), Rg/t ratio %.4f "
                      "(<=0.25), %.2f s (<10)",
                      tail, reg_ratio, vio_ratio, elapsed);
  d += fmt("; vs reference solver: tail tracking %.4f, R/t ratio %.4f", tail_o,
           reg_o.over_t[2000] / reg_o.over_t[200]);
  return {pass, d};
}

// Example 2, stochastic algorithm, 20 seeds.
Outcome c2() {
  const auto start = std::chrono::steady_clock::now();
  auto cfg = default_config(2);
  cfg.horizon = 100;
  cfg.oracle_metrics = false;
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const RunResult r = run_experiment(cfg, seed);
    const MetricSeries& reg = aggregate(r, "regret_closed_form");
    if (reg.over_t[100] < reg.over_t[10]) ++good;
  }
  const double elapsed = seconds_since(start);
  return {good >= 18 && elapsed < 30.0,
          fmt("%.0f/20 seeds with R_100/100 < R_10/10 (>=18), %.2f s (<30)", good, elapsed)};
}

// Dual iterates stay inside the sqrt(n) kappa2 ball in every run.
Outcome c3() {
  struct Case {
    std::string name;
    MepInstance inst;
    GraphSequence seq;
    std::function<RunTrace()> run;
  };
  std::vector<Case> cases;
  const auto tv = StepSchedule::time_varying(0.5, 1.0 / 3.0);

  const auto e1 = default_config(1);
  const MepInstance ex1 = make_instance(e1);
  const GraphSequence g1 = make_graph(e1);
  cases.push_back({"ex1 exact", ex1, g1, [&] { return run_exact(ex1, g1, make_schedule(e1), 2000, *e1.init); }});
  cases.push_back({"ex1 stochastic", ex1, g1, [&] {
                     return run_stochastic(ex1, g1, StepSchedule::fixed(0.5, 1.0 / 3.0, 1000, 30.0), 1000,
                                           *e1.init, NoiseModel::isotropic(2.0, 2.0), 11);
                   }});
  const auto e2 = default_config(2);
  const MepInstance ex2 = make_instance(e2);
  const GraphSequence g2 = make_graph(e2);
  cases.push_back({"ex2 exact", ex2, g2, [&] { return run_exact(ex2, g2, tv, 1000, *e2.init); }});
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    cases.push_back({"ex2 stochastic", ex2, g2, [&, seed] {
                       return run_stochastic(ex2, g2, make_schedule(e2), 100, *e2.init,
                                             NoiseModel::native(ex2, 0.5), seed);
                     }});
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 5; ++k) {
    MepInstance inst = testing::random_separable(rng);
    GraphSequence seq = testing::random_connected_sequence(inst.n, 1 + k % 3, rng);
    cases.push_back({"synthetic exact", inst, seq, [inst, seq, tv] { return run_exact(inst, seq, tv, 500); }});
    cases.push_back({"synthetic stochastic", inst, seq, [inst, seq] {
                       return run_stochastic(inst, seq, StepSchedule::fixed(0.5, 1.0 / 3.0, 500), 500, {},
                                             NoiseModel::isotropic(1.0, 1.0), 5);
                     }});
  }

  int violations = 0;
  double worst_ratio = 0.0;
  for (auto& c : cases) {
    const double bound = std::sqrt(static_cast<double>(c.inst.n)) * estimate_bounds(c.inst).kappa2;
    const RunTrace tr = c.run();
    for (const auto& y : tr.y) {
      const double top = y.rowwise().norm().maxCoeff();
      if (top > bound + 1e-9) ++violations;
      worst_ratio = std::max(worst_ratio, top / bound);
    }
  }
  return {violations == 0, fmt("%.0f runs, %.0f violating rounds, worst ||y||/bound %.4f",
                               static_cast<double>(cases.size()), violations, worst_ratio)};
}

// Mixing bound on random connected sequences.
Outcome c4() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> agents(2, 8), period(1, 4);
  int violations = 0;
  double worst = -1e300;
  std::ostringstream shapes;
  for (int k = 0; k < 10; ++k) {
    const int n = agents(rng), U = period(rng);
    const GraphSequence seq = testing::random_connected_sequence(n, U, rng);
    const MixingExcess ex = worst_mixing_excess(seq, mixing_certificate(seq), 200);
    if (ex.excess > 0.0) ++violations;
    worst = std::max(worst, ex.excess);
    shapes << (k ? " " : "") << n << "/" << U;
  }
  return {violations == 0, fmt("10 sequences, %.0f violations, worst excess %.3g; n/U = ", violations, worst) +
                               shapes.str()};
}

// Mirror-step optimality and closed form vs iterative solver.
Outcome c5() {
  std::mt19937_64 rng(555);
  int vi_fail = 0, cf_fail = 0, compared = 0;
  double worst_gap = -1e300, worst_diff = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto c = testing::random_mirror_case(k, rng);
    const Vector xhat = mirror_argmin(c.geom, c.set, c.z, c.s);
    double gap = -1e300;
    for (int p = 0; p < 100; ++p)
      gap = std::max(gap, three_point_gap(c.geom, c.z, c.s, xhat, c.set.sample(rng)));
    if (gap > 1e-8) ++vi_fail;
    worst_gap = std::max(worst_gap, gap);
    if (c.geom.kind() == BregmanGeometry::Kind::Euclidean) {
      ++compared;
      const double diff = (xhat - mirror_argmin_iterative(c.geom, c.set, c.z, c.s)).cwiseAbs().maxCoeff();
      if (diff > 1e-8) ++cf_fail;
      worst_diff = std::max(worst_diff, diff);
    }
  }
  return {vi_fail == 0 && cf_fail == 0,
          fmt("1000 cases: %.0f inequality failures (worst gap %.2e), %.0f/%.0f closed-form "
              "mismatches (worst %.2e)",
              vi_fail, worst_gap, cf_fail, compared, worst_diff)};
}

// Per-step movement bound on exact runs.
Outcome c6() {
  std::ostringstream d;
  bool pass = true;
  for (int example : {1, 2}) {
    auto cfg = default_config(example);
    cfg.algorithm = Algorithm::Exact;
    if (example == 2) {
      cfg.schedule = StepSchedule::Kind::TimeVarying;
      cfg.horizon = 1000;
    }
    cfg.oracle_metrics = false;
    const RunResult r = run_experiment(cfg, 1);
    const auto& c = r.certificate.at("step_bound");
    pass = pass && c.pass;
    d << (example == 1 ? "" : "; ") << "example " << example << ": worst margin " << c.margin
      << " (observed " << c.observed << " vs " << c.bound << " at round " << c.round << ")";
  }
  return {pass, d.str()};
}

// Zero noise reproduces the exact algorithm.
Outcome c7() {
  double worst = 0.0;
  for (int example : {1, 2}) {
    const auto cfg = default_config(example);
    const MepInstance inst = make_instance(cfg);
    const GraphSequence seq = make_graph(cfg);
    const auto fixed = StepSchedule::fixed(0.5, 1.0 / 3.0, 500, 30.0);
    const RunTrace ex = run_exact(inst, seq, fixed, 500, *cfg.init);
    for (const NoiseModel& zero : {NoiseModel::isotropic(0.0, 0.0)}) {
      const RunTrace st = run_stochastic(inst, seq, fixed, 500, *cfg.init, zero, 42);
      for (std::size_t t = 0; t < ex.x.size(); ++t) {
        worst = std::max(worst, testing::max_abs_diff(ex.x[t], st.x[t]));
        worst = std::max(worst, testing::max_abs_diff(ex.y[t], st.y[t]));
      }
    }
  }
  return {worst <= 1e-12, fmt("max |stochastic - exact| over T=500, both examples: %.3g (<=1e-12)", worst)};
}

// Reference solver vs grid search and the probe certificate.
Outcome c8() {
  const MepInstance inst = example1();
  std::mt19937_64 rng(88);
  std::uniform_int_distribution<Round> round(0, 2000);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Round t = round(rng);
    const double x = solve_instantaneous(inst, t).x[0];
    const double s = std::sin(static_cast<double>(t));
    double best = 1e300, arg = std::nan("");
    for (long j = 0; j <= 4000000; ++j) {
      const double u = -2.0 + j * 1e-6;
      // sum_i g_i = 6 (sin t + 1) u^2 - (21/6) u
      if (6.0 * (s + 1.0) * u * u - 3.5 * u > 0.0) continue;
      const double obj = 10.5 * u * u - 18.0 * u * s;
      if (obj < best) best = obj, arg = u;
    }
    worst = std::max(worst, std::abs(x - arg));
  }
  SolveOptions opts;
  opts.probes = 1000;
  const SolveResult r2 = solve_instantaneous(example2(), 0, opts);
  return {worst <= 1e-4 && r2.min_probe_value >= -1e-5,
          fmt("example 1: max |oracle - grid| over 50 rounds %.2e (<=1e-4); example 2 t=0: "
              "min probe sum f %.3g (>=-1e-5)",
              worst, r2.min_probe_value)};
}

// Byte-identical metrics across invocations and worker counts.
Outcome c9() {
  const auto dir = testing::scratch_dir("acceptance_c9");
  bool same = true;
  std::ostringstream d;
  for (int example : {1, 2}) {
    auto cfg = default_config(example);
    if (example == 1) cfg.horizon = 500;
    std::vector<std::string> texts;
    int run = 0;
    for (int threads : {1, 1, 4, 4}) {
      cfg.threads = threads;
      const auto out = dir / ("ex" + std::to_string(example) + "_" + std::to_string(run++));
      write_artifacts(out.string(), cfg, run_experiment(cfg, 7));
      texts.push_back(testing::slurp((out / "metrics.csv").string()));
    }
    bool ok = true;
    for (const auto& t : texts) ok = ok && t == texts.front() && !t.empty();
    same = same && ok;
    d << (example == 1 ? "" : "; ") << "example " << example << ": 4 runs (threads 1,1,4,4) "
      << (ok ? "identical" : "DIFFER") << " (" << texts.front().size() << " bytes)";
  }
  return {same, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"example 1 reproduction", c1},     {"example 2 reproduction", c2},
      {"dual iterate bound", c3},         {"mixing certificate", c4},
      {"mirror step soundness", c5},      {"per-step movement bound", c6},
      {"zero-noise degeneracy", c7},      {"reference solver cross-check", c8},
      {"determinism", c9}};
  std::vector<int> selected;
  if (argc > 1) {
    for (int k = 1; k < argc; ++k) selected.push_back(std::atoi(argv[k]));
  } else {
    for (int k = 1; k <= 9; ++k) selected.push_back(k);
  }
  bool all = true;
  for (int k : selected) {
    if (k < 1 || k > 9) {
      std::fprintf(stderr, "unknown criterion %d\n", k);
      return 2;
    }
    const auto& [name, fn] = criteria[static_cast<std::size_t>(k - 1)];
    Outcome o{false, ""};
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] C%d %s: %s\n", o.pass ? "PASS" : "FAIL", k, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
