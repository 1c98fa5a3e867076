#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "omep/geometry.hpp"
#include "omep/graph.hpp"
#include "omep/oracle.hpp"
#include "omep/problem.hpp"
#include "omep/types.hpp"

namespace omep {

/// Step sizes zeta_t = base_t^{-a}, eta_t = base_t^{-b} with b < a < 2b.
///
/// TimeVarying uses base_t = scale * t + offset; the default scale = offset = 1
/// gives (t+1)^{-a}. Fixed uses base = T + offset for every round. Requiring
/// base >= 1 keeps both sizes in (0, 1] with zeta <= eta.
class StepSchedule {
 public:
  enum class Kind { TimeVarying, Fixed };

  static StepSchedule time_varying(double a, double b, double scale = 1.0, double offset = 1.0);
  static StepSchedule fixed(double a, double b, Round horizon, double offset = 1.0);

  Kind kind() const { return kind_; }
  double a() const { return a_; }
  double b() const { return b_; }
  double scale() const { return scale_; }
  double offset() const { return offset_; }
  Round horizon() const { return horizon_; }

  double zeta(Round t) const;
  double eta(Round t) const;

  /// Same kind, scale and offset with different exponents.
  StepSchedule with_exponents(double a, double b) const;
  /// Fixed schedules re-derive their constants from the new horizon.
  StepSchedule with_horizon(Round horizon) const;

 private:
  StepSchedule(Kind kind, double a, double b, double scale, double offset, Round horizon);
  double base(Round t) const;

  Kind kind_;
  double a_, b_, scale_, offset_;
  Round horizon_;
};

nlohmann::json schedule_to_json(const StepSchedule& s);
StepSchedule schedule_from_json(const nlohmann::json& doc, Round horizon);

enum class Algorithm { Exact, Stochastic };
std::string to_string(Algorithm a);

/// Full history of one run. States are stored with agents as rows.
struct RunTrace {
  std::string instance;
  Algorithm algorithm = Algorithm::Exact;
  std::uint64_t seed = 0;
  std::vector<Matrix> x;                ///< rounds 0..T, n x m
  std::vector<Matrix> y;                ///< rounds 0..T, n x h
  std::vector<Matrix> z;                ///< rounds 0..T-1, mixed primal states
  std::vector<Matrix> primal_grad;      ///< rounds 0..T-1, gradient fed to the step
  std::vector<Matrix> dual_innovation;  ///< rounds 0..T-1, g_i^t(x_i(t))
  std::vector<double> zeta;             ///< rounds 0..T
  std::vector<double> eta;              ///< rounds 0..T

  Round horizon() const { return static_cast<Round>(x.size()) - 1; }
  int agents() const { return static_cast<int>(x.front().rows()); }
};

/// Serial is the reference implementation; OpenMP parallelizes the per-agent
/// work of each round and produces bit-identical traces.
enum class Backend { Serial, OpenMP };

struct EngineOptions {
  BregmanGeometry geometry = BregmanGeometry::euclidean();
  Backend backend = Backend::Serial;
  int threads = 0;  ///< OpenMP workers; 0 keeps the runtime default
  InnerSolverOptions inner;
};

/// argmin_{x in Omega} D(x, z) + <zeta grad_f + eta jac_g y, x>.
Vector primal_step(const BregmanGeometry& geom, const FeasibleSet& omega, const Vector& z,
                   const Vector& grad_f, const Matrix& jac_g, const Vector& y, double zeta,
                   double eta, const InnerSolverOptions& inner = {});

/// Row i: [(1 - eta) sum_j a_ij(t) y_j + eta g_i]_+.
Matrix dual_step(const GraphSequence& seq, Round t, const Matrix& y_all, const Matrix& g_vals,
                 double eta);

/// Box midpoint / ball center / uniform point for every agent.
Matrix default_initial_states(const MepInstance& inst);

/// Exact-gradient online primal-dual mirror descent. An empty init uses
/// default_initial_states.
RunTrace run_exact(const MepInstance& inst, const GraphSequence& seq, const StepSchedule& sched,
                   Round horizon, const Matrix& init = {}, const EngineOptions& opts = {});

/// Stochastic-gradient variant; requires a Fixed schedule. The dual update
/// uses exact g_i^t.
RunTrace run_stochastic(const MepInstance& inst, const GraphSequence& seq,
                        const StepSchedule& sched, Round horizon, const Matrix& init,
                        const NoiseModel& noise, std::uint64_t seed,
                        const EngineOptions& opts = {});

/// Trace CSV: round, agent, coord, x, y_1..y_h, zeta, eta.
void write_trace_csv(const std::string& path, const RunTrace& trace);

}  // namespace omep
