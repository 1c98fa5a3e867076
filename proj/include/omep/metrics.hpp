#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "omep/engine.hpp"
#include "omep/geometry.hpp"
#include "omep/graph.hpp"
#include "omep/problem.hpp"
#include "omep/types.hpp"

namespace omep {

/// Benchmark trajectory t -> x*_t.
using SolutionPath = std::function<Vector(Round)>;

/// One value per trace round. over_t divides round t by max(t, 1).
struct MetricSeries {
  std::string name;
  int agent = -1;  ///< -1 for aggregates over agents
  std::vector<double> values;
  std::vector<double> over_t;
};

/// Evaluates path at rounds 0..last. Serial, so memoizing paths fill in order.
std::vector<Vector> tabulate_path(const SolutionPath& path, Round last);

/// R_{i,t} = -sum_{s<=t} sum_j f_j^s(x_i(s), x*_s).
MetricSeries dynamic_regret(const RunTrace& trace, const MepInstance& inst, int agent,
                            const SolutionPath& path);
/// Same, with the benchmark already tabulated over rounds 0..T.
MetricSeries dynamic_regret(const RunTrace& trace, const MepInstance& inst, int agent,
                            const std::vector<Vector>& path);
/// Per-agent regret series plus their max over agents (agent = -1), last.
std::vector<MetricSeries> regret_all(const RunTrace& trace, const MepInstance& inst,
                                     const std::vector<Vector>& path, const std::string& name);

/// ||[sum_{s<=t} sum_j g_j^s(x_i(s))]_+||. The positive part is taken after
/// summing, so rounds can cancel.
MetricSeries violation(const RunTrace& trace, const MepInstance& inst, int agent);
std::vector<MetricSeries> violation_all(const RunTrace& trace, const MepInstance& inst);

/// sum_{t=0}^{T} ||x*_{t+1} - x*_t||.
double path_length(const SolutionPath& path, Round horizon);

/// Max over agents of ||x_i(t) - mean(t)|| and ||y_i(t) - mean(t)||.
std::pair<MetricSeries, MetricSeries> consensus_errors(const RunTrace& trace);

/// Max over agents of ||x_i(t) - x*_t||.
MetricSeries tracking_error(const RunTrace& trace, const std::vector<Vector>& path,
                            const std::string& name);

/// Rows round, metric, agent, value, value_over_t.
void write_metrics_csv(const std::string& path, const std::vector<MetricSeries>& series);

struct CertificateCheck {
  std::string name;
  double bound = 0.0;     ///< bound at the worst round
  double observed = 0.0;  ///< observed value at the worst round
  double margin = 0.0;    ///< bound - observed, minimized over rounds
  Round round = 0;        ///< where the minimum margin occurred
  bool pass = true;       ///< margin >= -1e-9
  bool applicable = true;
  std::string note;
};

struct CertificateReport {
  std::vector<CertificateCheck> checks;
  bool pass = true;
  BoundConstants bounds;
  MixingCertificate mixing{0.0, 0.0};
  double mu = 0.0;
  double ell = 0.0;  ///< divergence Lipschitz estimate, recorded only
  double rho1 = 0.0, rho2 = 0.0, rho6 = 0.0;

  const CertificateCheck& at(const std::string& name) const;
};

struct CertificateOptions {
  Round max_gap = 200;  ///< mixing check covers t - s in [0, max_gap]
  int ell_samples = 2000;
  std::uint64_t seed = 5;
};

/// Evaluates every runtime bound at every round and keeps the worst margin
/// per check. Failures are report entries, not exceptions. The step bound and
/// the primal envelope assume exact gradients and are marked inapplicable
/// for stochastic traces.
CertificateReport certificate_check(const RunTrace& trace, const MepInstance& inst,
                                    const GraphSequence& seq, const BoundConstants& bounds,
                                    const BregmanGeometry& geom,
                                    const CertificateOptions& opts = {});

nlohmann::json certificate_to_json(const CertificateReport& report);

}  // namespace omep
