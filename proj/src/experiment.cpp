#include "omep/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>

#include <omp.h>

namespace omep {

namespace {

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw Error("init: empty state list");
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw Error("init: ragged state list");
    for (std::size_t c = 0; c < rows[i].size(); ++c)
      out(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
  }
  return out;
}

nlohmann::json matrix_to_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) r.push_back(m(i, c));
    rows.push_back(r);
  }
  return rows;
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "exact") return Algorithm::Exact;
  if (s == "stochastic") return Algorithm::Stochastic;
  throw Error("algorithm must be 'exact' or 'stochastic' (got '" + s + "')");
}

EpsilonSign parse_sign(const std::string& s) {
  if (s == "capacity") return EpsilonSign::Capacity;
  if (s == "paper") return EpsilonSign::Paper;
  throw Error("epsilon_sign must be 'capacity' or 'paper' (got '" + s + "')");
}

}  // namespace

ExperimentConfig default_config(int example) {
  ExperimentConfig c;
  c.example = example;
  if (example == 1) {
    c.init = Matrix(6, 1);
    *c.init << -2.0, -1.5, -1.0, 2.0, 1.5, 1.0;
    return c;
  }
  if (example == 2) {
    c.algorithm = Algorithm::Stochastic;
    c.schedule = StepSchedule::Kind::Fixed;
    c.scale = 1.0;
    c.offset = 30.0;
    c.horizon = 100;
    Matrix init(5, 5);
    init << 10, 15, 20, 25, 30,
             5, 10, 15, 20, 25,
             3,  8, 13, 18, 23,
             5, 10, 15, 20, 25,
            10, 15, 20, 25, 30;
    c.init = init;
    return c;
  }
  throw Error("example must be 1 or 2 (got " + std::to_string(example) + ")");
}

ExperimentConfig config_from_json(const nlohmann::json& raw) {
  const nlohmann::json& doc = raw.contains("config") ? raw.at("config") : raw;
  ExperimentConfig c = default_config(doc.value("example", 1));
  if (doc.contains("epsilon_sign")) c.epsilon_sign = parse_sign(doc.at("epsilon_sign"));
  c.constraint_count = doc.value("constraint_count", c.constraint_count);
  c.graph = doc.value("graph", c.graph);
  if (doc.contains("algorithm")) c.algorithm = parse_algorithm(doc.at("algorithm"));
  if (doc.contains("schedule")) {
    const auto& s = doc.at("schedule");
    const std::string v = s.value("variant", c.schedule == StepSchedule::Kind::Fixed
                                                 ? std::string("fixed")
                                                 : std::string("time_varying"));
    if (v == "fixed") c.schedule = StepSchedule::Kind::Fixed;
    else if (v == "time_varying") c.schedule = StepSchedule::Kind::TimeVarying;
    else throw Error("schedule.variant must be 'fixed' or 'time_varying' (got '" + v + "')");
    c.a = s.value("a", c.a);
    c.b = s.value("b", c.b);
    c.scale = s.value("scale", c.scale);
    c.offset = s.value("offset", c.offset);
  }
  c.horizon = doc.value("horizon", c.horizon);
  if (doc.contains("seeds")) c.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
  if (doc.contains("init")) {
    if (doc.at("init").is_null()) c.init.reset();
    else c.init = rows_to_matrix(doc.at("init").get<std::vector<std::vector<double>>>());
  }
  c.out = doc.value("out", c.out);
  c.verify = doc.value("verify", c.verify);
  c.oracle_tol = doc.value("oracle_tol", c.oracle_tol);
  c.threads = doc.value("threads", c.threads);
  c.parallel = doc.value("parallel", c.parallel);
  if (doc.contains("noise")) {
    const auto& n = doc.at("noise");
    const std::string src = n.value("source", std::string("native"));
    if (src == "native") c.noise_source = NoiseModel::Source::Native;
    else if (src == "isotropic") c.noise_source = NoiseModel::Source::Isotropic;
    else throw Error("noise.source must be 'native' or 'isotropic' (got '" + src + "')");
    c.sigma1 = n.value("sigma1", c.sigma1);
    c.sigma2 = n.value("sigma2", c.sigma2);
  }
  if (doc.contains("bounds")) {
    c.bound_samples = doc.at("bounds").value("samples", c.bound_samples);
    c.bound_seed = doc.at("bounds").value("seed", c.bound_seed);
  }
  c.oracle_metrics = doc.value("oracle_metrics", c.oracle_metrics);
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json schedule{{"variant", c.schedule == StepSchedule::Kind::Fixed ? "fixed"
                                                                              : "time_varying"},
                          {"a", c.a},
                          {"b", c.b},
                          {"scale", c.scale},
                          {"offset", c.offset}};
  return {{"example", c.example},
          {"epsilon_sign", c.epsilon_sign == EpsilonSign::Capacity ? "capacity" : "paper"},
          {"constraint_count", c.constraint_count},
          {"graph", c.graph},
          {"algorithm", to_string(c.algorithm)},
          {"schedule", schedule},
          {"horizon", c.horizon},
          {"seeds", c.seeds},
          {"init", c.init ? matrix_to_rows(*c.init) : nlohmann::json(nullptr)},
          {"out", c.out},
          {"verify", c.verify},
          {"oracle_tol", c.oracle_tol},
          {"threads", c.threads},
          {"parallel", c.parallel},
          {"noise",
           {{"source", c.noise_source == NoiseModel::Source::Native ? "native" : "isotropic"},
            {"sigma1", c.sigma1},
            {"sigma2", c.sigma2}}},
          {"bounds", {{"samples", c.bound_samples}, {"seed", c.bound_seed}}},
          {"oracle_metrics", c.oracle_metrics}};
}

void validate_config(const ExperimentConfig& c) {
  if (c.example != 1 && c.example != 2)
    throw Error("example must be 1 or 2 (got " + std::to_string(c.example) + ")");
  if (c.constraint_count != 5 && c.constraint_count != 6)
    throw Error("constraint_count must be 5 or 6");
  if (!(c.a > 0.0 && c.a < 1.0)) throw Error("schedule.a must lie in (0, 1)");
  if (!(c.b > 0.0 && c.b < 1.0)) throw Error("schedule.b must lie in (0, 1)");
  if (!(c.b < c.a)) throw Error("schedule must satisfy b < a");
  if (!(c.a < 2.0 * c.b)) throw Error("schedule must satisfy a < 2b");
  if (!(c.scale > 0.0)) throw Error("schedule.scale must be positive");
  if (!(c.offset >= 1.0)) throw Error("schedule.offset must be >= 1");
  if (c.horizon < 0) throw Error("horizon must be >= 0");
  if (c.seeds.empty()) throw Error("at least one seed is required");
  if (c.algorithm == Algorithm::Stochastic && c.schedule != StepSchedule::Kind::Fixed)
    throw Error("the stochastic algorithm requires schedule.variant = fixed");
  if (!(c.oracle_tol > 0.0)) throw Error("oracle_tol must be positive");
  if (!(c.sigma1 >= 0.0) || !(c.sigma2 >= 0.0)) throw Error("noise scales must be >= 0");
  if (c.threads < 0) throw Error("threads must be >= 0");
  if (c.bound_samples < 1000) throw Error("bounds.samples must be >= 1000");
}

MepInstance make_instance(const ExperimentConfig& c) {
  if (c.example == 1) return example1({c.constraint_count});
  return example2({c.epsilon_sign, std::nullopt});
}

GraphSequence make_graph(const ExperimentConfig& c) {
  if (c.graph == "builtin") return c.example == 1 ? graphs::example1() : graphs::example2();
  if (c.graph == "complete") return graphs::complete(c.example == 1 ? 6 : 5);
  return load_graph_sequence(c.graph);
}

StepSchedule make_schedule(const ExperimentConfig& c) {
  if (c.schedule == StepSchedule::Kind::Fixed)
    return StepSchedule::fixed(c.a, c.b, c.horizon, c.offset);
  return StepSchedule::time_varying(c.a, c.b, c.scale, c.offset);
}

EngineOptions make_engine_options(const ExperimentConfig& c) {
  EngineOptions o;
  o.backend = c.parallel ? Backend::OpenMP : Backend::Serial;
  o.threads = c.threads;
  return o;
}

namespace {

// Reference solutions for rounds 0..last, solved in parallel. Each solve is
// deterministic, so the table does not depend on the worker count.
std::map<Round, Vector> solve_path(const MepInstance& inst, Round last, double tol, int threads) {
  const Round count = last + 1;
  std::vector<Vector> xs(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  SolveOptions opts;
  opts.tolerance = tol;
  const int workers = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (Round t = 0; t < count; ++t) {
    try {
      xs[static_cast<std::size_t>(t)] = solve_instantaneous(inst, t, opts).x;
    } catch (...) {
      errors[static_cast<std::size_t>(t)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::map<Round, Vector> out;
  for (Round t = 0; t < count; ++t) out.emplace(t, std::move(xs[static_cast<std::size_t>(t)]));
  return out;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  const MepInstance inst = make_instance(cfg);
  const GraphSequence seq = make_graph(cfg);
  const StepSchedule sched = make_schedule(cfg);
  const EngineOptions eopts = make_engine_options(cfg);
  const Matrix init = cfg.init ? *cfg.init : Matrix();

  RunResult r;
  r.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  if (cfg.algorithm == Algorithm::Exact) {
    r.trace = run_exact(inst, seq, sched, cfg.horizon, init, eopts);
  } else {
    const NoiseModel noise = cfg.noise_source == NoiseModel::Source::Native
                                 ? NoiseModel::native(inst, cfg.sigma2)
                                 : NoiseModel::isotropic(cfg.sigma1, cfg.sigma2);
    r.trace = run_stochastic(inst, seq, sched, cfg.horizon, init, noise, seed, eopts);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const Round T = r.trace.horizon();
  if (inst.solution_path) {
    const auto closed = tabulate_path(inst.solution_path, T);
    auto reg = regret_all(r.trace, inst, closed, "regret_closed_form");
    r.metrics.insert(r.metrics.end(), reg.begin(), reg.end());
    r.metrics.push_back(tracking_error(r.trace, closed, "tracking_closed_form"));
    r.path_length_closed_form = path_length(inst.solution_path, T);
  }
  if (cfg.oracle_metrics) {
    r.oracle_solutions = solve_path(inst, T, cfg.oracle_tol, cfg.threads);
    std::vector<Vector> oracle;
    for (auto& [t, x] : r.oracle_solutions) oracle.push_back(x);
    auto reg = regret_all(r.trace, inst, oracle, "regret_oracle");
    r.metrics.insert(r.metrics.end(), reg.begin(), reg.end());
    r.metrics.push_back(tracking_error(r.trace, oracle, "tracking_oracle"));
  }
  auto viol = violation_all(r.trace, inst);
  r.metrics.insert(r.metrics.end(), viol.begin(), viol.end());
  auto [cx, cy] = consensus_errors(r.trace);
  r.metrics.push_back(std::move(cx));
  r.metrics.push_back(std::move(cy));

  BoundEstimateOptions bopts;
  bopts.samples = cfg.bound_samples;
  bopts.seed = cfg.bound_seed;
  const BoundConstants bounds = estimate_bounds(inst, bopts);
  r.certificate = certificate_check(r.trace, inst, seq, bounds, eopts.geometry);
  return r;
}

const MetricSeries& aggregate(const RunResult& r, const std::string& metric) {
  for (const auto& s : r.metrics)
    if (s.name == metric && s.agent == -1) return s;
  throw Error("run has no aggregate metric '" + metric + "'");
}

double final_value(const RunResult& r, const std::string& metric, bool over_t) {
  const MetricSeries& s = aggregate(r, metric);
  return over_t ? s.over_t.back() : s.values.back();
}

void write_artifacts(const std::string& dir, const ExperimentConfig& cfg, const RunResult& r) {
  std::filesystem::create_directories(dir);
  const MepInstance inst = make_instance(cfg);
  nlohmann::json manifest{{"config", config_to_json(cfg)},
                          {"seed", r.seed},
                          {"instance", r.trace.instance},
                          {"algorithm", to_string(r.trace.algorithm)},
                          {"agents", inst.n},
                          {"m", inst.m},
                          {"h", inst.h},
                          {"schedule", schedule_to_json(make_schedule(cfg))},
                          {"bounds", bounds_to_json(r.certificate.bounds)},
                          {"mixing",
                           {{"C", r.certificate.mixing.C}, {"lambda", r.certificate.mixing.lambda}}},
                          {"path_length_closed_form", r.path_length_closed_form},
                          {"certificates_pass", r.certificate.pass},
                          {"wall_seconds", r.seconds}};
  std::ofstream(dir + "/manifest.json") << manifest.dump(2) << '\n';
  std::ofstream(dir + "/certificate.json") << certificate_to_json(r.certificate).dump(2) << '\n';
  write_trace_csv(dir + "/trace.csv", r.trace);
  write_metrics_csv(dir + "/metrics.csv", r.metrics);
  if (!r.oracle_solutions.empty()) write_solution_csv(dir + "/solutions.csv", r.oracle_solutions);
}

std::vector<SweepRow> sweep(const ExperimentConfig& cfg,
                            const std::vector<std::pair<double, double>>& grid) {
  if (grid.empty()) throw Error("sweep grid is empty");
  for (const auto& [a, b] : grid)
    if (!(b < a && a < 2.0 * b && a > 0.0 && a < 1.0 && b > 0.0))
      throw Error("sweep point (a=" + std::to_string(a) + ", b=" + std::to_string(b) +
                  ") violates b < a < 2b");
  std::vector<SweepRow> rows;
  for (const auto& [a, b] : grid) {
    ExperimentConfig c = cfg;
    c.a = a;
    c.b = b;
    const RunResult r = run_experiment(c, c.seeds.front());
    const bool closed = make_instance(c).solution_path != nullptr;
    rows.push_back({a, b, final_value(r, closed ? "regret_closed_form" : "regret_oracle", true),
                    final_value(r, "violation", true), r.seconds});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& x, const SweepRow& y) {
    return x.regret_over_t < y.regret_over_t;
  });
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot write " + path);
  std::fputs("a,b,rate_exponent,final_regret_over_t,final_violation_over_t,wall_seconds\n", f);
  for (const auto& r : rows)
    std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.a, r.b, 1.0 + r.a - 2.0 * r.b,
                 r.regret_over_t, r.violation_over_t, r.seconds);
  std::fclose(f);
}

}  // namespace omep
