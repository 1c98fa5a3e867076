#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omep/engine.hpp"
#include "omep/graph.hpp"
#include "omep/metrics.hpp"
#include "omep/oracle.hpp"
#include "omep/problem.hpp"

namespace omep {

/// Everything needed to reproduce a run. Defaults follow the chosen example.
struct ExperimentConfig {
  int example = 1;
  EpsilonSign epsilon_sign = EpsilonSign::Capacity;
  int constraint_count = 6;
  /// "builtin" (the example's own sequence), "complete", or a JSON file path.
  std::string graph = "builtin";
  Algorithm algorithm = Algorithm::Exact;
  StepSchedule::Kind schedule = StepSchedule::Kind::TimeVarying;
  double a = 0.5;
  double b = 1.0 / 3.0;
  double scale = 20.0;
  double offset = 8.0;
  Round horizon = 2000;
  std::vector<std::uint64_t> seeds{1};
  std::optional<Matrix> init;  ///< n x m; empty means the set center
  std::string out = "out";
  bool verify = false;
  double oracle_tol = 1e-8;
  int threads = 0;
  bool parallel = true;
  NoiseModel::Source noise_source = NoiseModel::Source::Native;
  double sigma1 = 0.0;  ///< isotropic noise only
  double sigma2 = 0.0;
  int bound_samples = 4000;
  std::uint64_t bound_seed = 1;
  bool oracle_metrics = true;  ///< also score against the reference solver
};

ExperimentConfig default_config(int example);
/// Missing keys keep the defaults of doc["example"].
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Throws Error naming the first violated constraint.
void validate_config(const ExperimentConfig& cfg);

MepInstance make_instance(const ExperimentConfig& cfg);
GraphSequence make_graph(const ExperimentConfig& cfg);
StepSchedule make_schedule(const ExperimentConfig& cfg);
EngineOptions make_engine_options(const ExperimentConfig& cfg);

struct RunResult {
  std::uint64_t seed = 0;
  RunTrace trace;
  std::vector<MetricSeries> metrics;
  CertificateReport certificate;
  std::map<Round, Vector> oracle_solutions;
  double path_length_closed_form = 0.0;
  double seconds = 0.0;  ///< algorithm wall time only
};

/// Runs the algorithm and all offline metrics. Throws InfeasibleError when
/// the reference solver finds an empty X^t.
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

/// manifest.json, trace.csv, metrics.csv, certificate.json and, when the
/// reference solver ran, solutions.csv under dir.
void write_artifacts(const std::string& dir, const ExperimentConfig& cfg, const RunResult& r);

/// Final value of a metric's aggregate row.
double final_value(const RunResult& r, const std::string& metric, bool over_t);
/// Aggregate series by name.
const MetricSeries& aggregate(const RunResult& r, const std::string& metric);

struct SweepRow {
  double a = 0.0, b = 0.0;
  double regret_over_t = 0.0;
  double violation_over_t = 0.0;
  double seconds = 0.0;
};

/// One run (first seed) per (a, b); rows sorted by final R/T.
std::vector<SweepRow> sweep(const ExperimentConfig& cfg,
                            const std::vector<std::pair<double, double>>& grid);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace omep
