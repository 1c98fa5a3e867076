// Experiment runner: `omep run` and `omep sweep`.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "omep/experiment.hpp"

namespace {

struct Flags {
  std::optional<int> example;
  std::string config;
  std::optional<std::string> algorithm;
  std::optional<long> horizon;
  std::vector<std::uint64_t> seeds;
  std::optional<double> a, b;
  bool verify = false;
  std::optional<std::string> epsilon_sign;
  std::optional<int> constraint_count;
  std::optional<std::string> out;
  std::optional<double> oracle_tol;
  std::optional<int> threads;
  std::optional<std::string> graph;
  std::optional<double> sigma1, sigma2;
  bool serial = false;
  bool no_oracle = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--example", f.example, "built-in example (1 or 2)");
  app->add_option("--config", f.config, "JSON config or run manifest");
  app->add_option("--algorithm", f.algorithm, "exact | stochastic");
  app->add_option("--horizon", f.horizon, "number of rounds T");
  app->add_option("--seed", f.seeds, "seed (repeatable)");
  app->add_option("--a", f.a, "exponent of zeta");
  app->add_option("--b", f.b, "exponent of eta");
  app->add_flag("--verify", f.verify, "nonzero exit unless every certificate passes");
  app->add_option("--epsilon-sign", f.epsilon_sign, "paper | capacity (example 2)");
  app->add_option("--constraint-count", f.constraint_count, "5 | 6 (example 1)");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--oracle-tol", f.oracle_tol, "reference solver tolerance");
  app->add_option("--threads", f.threads, "OpenMP workers (0 = runtime default)");
  app->add_option("--graph", f.graph, "builtin | complete | path to graph JSON");
  app->add_option("--sigma1", f.sigma1, "isotropic gradient noise scale");
  app->add_option("--sigma2", f.sigma2, "Jacobian noise scale");
  app->add_flag("--serial", f.serial, "use the serial reference engine");
  app->add_flag("--no-oracle", f.no_oracle, "skip metrics against the reference solver");
}

omep::ExperimentConfig build_config(const Flags& f) {
  omep::ExperimentConfig c;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw omep::Error("cannot read config " + f.config);
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw omep::Error("config " + f.config + ": " + e.what());
    }
    if (f.example) {
      auto& target = doc.contains("config") ? doc["config"] : doc;
      if (!target.contains("example") || target["example"] != *f.example) {
        // Switching example resets the example-specific defaults.
        target = nlohmann::json{{"example", *f.example}};
      }
    }
    c = omep::config_from_json(doc);
  } else {
    c = omep::default_config(f.example.value_or(1));
  }
  if (f.algorithm) {
    if (*f.algorithm == "exact") c.algorithm = omep::Algorithm::Exact;
    else if (*f.algorithm == "stochastic") c.algorithm = omep::Algorithm::Stochastic;
    else throw omep::Error("--algorithm must be exact or stochastic");
  }
  if (f.horizon) c.horizon = *f.horizon;
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (f.a) c.a = *f.a;
  if (f.b) c.b = *f.b;
  if (f.verify) c.verify = true;
  if (f.epsilon_sign) {
    if (*f.epsilon_sign == "paper") c.epsilon_sign = omep::EpsilonSign::Paper;
    else if (*f.epsilon_sign == "capacity") c.epsilon_sign = omep::EpsilonSign::Capacity;
    else throw omep::Error("--epsilon-sign must be paper or capacity");
  }
  if (f.constraint_count) c.constraint_count = *f.constraint_count;
  if (f.out) c.out = *f.out;
  if (f.oracle_tol) c.oracle_tol = *f.oracle_tol;
  if (f.threads) c.threads = *f.threads;
  if (f.graph) c.graph = *f.graph;
  if (f.sigma1) {
    c.noise_source = omep::NoiseModel::Source::Isotropic;
    c.sigma1 = *f.sigma1;
  }
  if (f.sigma2) c.sigma2 = *f.sigma2;
  if (f.serial) c.parallel = false;
  if (f.no_oracle) c.oracle_metrics = false;
  // A stochastic run needs the fixed schedule; switching algorithm on the
  // example-1 defaults would otherwise always be rejected.
  if (c.algorithm == omep::Algorithm::Stochastic && f.algorithm && f.config.empty() &&
      c.schedule != omep::StepSchedule::Kind::Fixed) {
    c.schedule = omep::StepSchedule::Kind::Fixed;
    c.scale = 1.0;
  }
  omep::validate_config(c);
  return c;
}

constexpr int kConfigError = 2;
constexpr int kInfeasible = 3;
constexpr int kVerifyFailed = 4;
constexpr int kRunError = 1;

int do_run(const Flags& flags) {
  const omep::ExperimentConfig cfg = build_config(flags);
  bool all_pass = true;
  for (std::uint64_t seed : cfg.seeds) {
    const omep::RunResult r = omep::run_experiment(cfg, seed);
    const std::string dir = cfg.out + "/seed_" + std::to_string(seed);
    omep::write_artifacts(dir, cfg, r);
    const bool closed = omep::make_instance(cfg).solution_path != nullptr;
    const std::string reg = closed ? "regret_closed_form" : "regret_oracle";
    std::printf("seed %llu: T=%lld  R/T=%.6g  Rg/T=%.6g  certificates=%s  (%.3f s) -> %s\n",
                static_cast<unsigned long long>(seed), static_cast<long long>(r.trace.horizon()),
                omep::final_value(r, reg, true), omep::final_value(r, "violation", true),
                r.certificate.pass ? "pass" : "FAIL", r.seconds, dir.c_str());
    if (!r.certificate.pass) {
      for (const auto& c : r.certificate.checks)
        if (!c.pass)
          std::fprintf(stderr, "  %s: bound %.6g observed %.6g at round %lld\n", c.name.c_str(),
                       c.bound, c.observed, static_cast<long long>(c.round));
    }
    all_pass = all_pass && r.certificate.pass;
  }
  return cfg.verify && !all_pass ? kVerifyFailed : 0;
}

std::vector<std::pair<double, double>> build_grid(const std::vector<std::string>& points,
                                                  const std::vector<double>& a_values,
                                                  std::optional<double> ratio) {
  std::vector<std::pair<double, double>> grid;
  for (const auto& p : points) {
    const auto colon = p.find(':');
    if (colon == std::string::npos) throw omep::Error("--grid expects a:b, got '" + p + "'");
    grid.emplace_back(std::stod(p.substr(0, colon)), std::stod(p.substr(colon + 1)));
  }
  if (!a_values.empty()) {
    if (!ratio) throw omep::Error("--a-values needs --b-ratio");
    for (double a : a_values) grid.emplace_back(a, a * *ratio);
  }
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online distributed mixed-equilibrium simulator"};
  app.require_subcommand(1);
  Flags run_flags, sweep_flags;
  auto* run = app.add_subcommand("run", "run the algorithm and write artifacts");
  add_common(run, run_flags);
  auto* sw = app.add_subcommand("sweep", "scan step-size exponents");
  add_common(sw, sweep_flags);
  std::vector<std::string> grid_points;
  std::vector<double> a_values;
  std::optional<double> b_ratio;
  sw->add_option("--grid", grid_points, "exponent pair a:b (repeatable)");
  sw->add_option("--a-values", a_values, "values of a, paired with b = a * ratio");
  sw->add_option("--b-ratio", b_ratio, "b / a for --a-values");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return do_run(run_flags);
    omep::ExperimentConfig cfg = build_config(sweep_flags);
    const auto rows = omep::sweep(cfg, build_grid(grid_points, a_values, b_ratio));
    std::filesystem::create_directories(cfg.out);
    const std::string path = cfg.out + "/sweep.csv";
    omep::write_sweep_csv(path, rows);
    for (const auto& r : rows)
      std::printf("a=%.4g b=%.4g  1+a-2b=%.4g  R/T=%.6g  Rg/T=%.6g\n", r.a, r.b,
                  1.0 + r.a - 2.0 * r.b, r.regret_over_t, r.violation_over_t);
    std::printf("-> %s\n", path.c_str());
    return 0;
  } catch (const omep::InfeasibleError& e) {
    std::fprintf(stderr, "error: %s\n  the coupled constraint set is empty; for example 2 try "
                         "--epsilon-sign capacity\n", e.what());
    return kInfeasible;
  } catch (const omep::ConvergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRunError;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const omep::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  }
}
