#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include <nlohmann/json_fwd.hpp>

#include "omep/geometry.hpp"
#include "omep/types.hpp"

namespace omep {

/// Suprema required by the runtime certificates.
struct BoundConstants {
  double kappa = 0.0;   ///< max ||x|| over Omega
  double kappa1 = 0.0;  ///< sup ||grad_2 f_i^t(x, y)||
  double kappa2 = 0.0;  ///< sup ||g_i^t(x)||
  double kappa3 = 0.0;  ///< sup ||grad g_ik^t(x)|| over constraint components
  double L = 0.0;       ///< first-argument Lipschitz constant of f_i^t
};

nlohmann::json bounds_to_json(const BoundConstants& b);

/// How the bifunctions are built. Algorithms only see gradients; the
/// reference solver uses this to pick its method.
enum class Structure { Separable, VariationalInequality, General };

/// Online mixed equilibrium problem with a coupled constraint
/// sum_i g_i^t(x) <= 0. Agents are indexed 0..n-1, rounds from 0.
///
/// Oracles must be pure and thread-safe.
struct MepInstance {
  using GradOracle = std::function<Vector(int, Round, const Vector&, const Vector&)>;
  using ValueOracle = std::function<double(int, Round, const Vector&, const Vector&)>;
  using ConstraintOracle = std::function<Vector(int, Round, const Vector&)>;
  using JacobianOracle = std::function<Matrix(int, Round, const Vector&)>;
  using PathOracle = std::function<Vector(Round)>;
  /// Rows M and offsets b with sum_i g_i^t(x) = M x - b.
  using AffineCoupling = std::function<std::pair<Matrix, Vector>(Round)>;
  /// Zero-mean perturbation of agent i's gradient drawn from the instance's
  /// own randomness (e.g. a demand shock).
  using NoiseOracle = std::function<Vector(int, Round, const Vector&, std::mt19937_64&)>;

  std::string name;
  int n = 0;
  Index m = 0;
  Index h = 0;
  FeasibleSet omega = FeasibleSet::box(1, 0.0, 1.0);
  Structure structure = Structure::General;

  GradOracle grad2_f;       ///< grad_2 f_i^t(x, y), an m-vector
  ValueOracle f_value;      ///< f_i^t(x, y); optional, needed for regret
  ConstraintOracle g;       ///< g_i^t(x), an h-vector
  JacobianOracle jac_g;     ///< grad g_i^t(x), an m x h matrix
  PathOracle solution_path; ///< closed-form benchmark x*_t; optional
  AffineCoupling affine_coupling;  ///< optional structure hint for the solver
  NoiseOracle native_noise;        ///< optional instance-specific gradient noise
  double native_noise_sigma = 0.0; ///< sub-Gaussian scale of native_noise

  /// Throws Error when sizes or required oracles are missing.
  void validate() const;

  Vector grad2_f_diag(int i, Round t, const Vector& x) const { return grad2_f(i, t, x, x); }
  /// sum_i grad_2 f_i^t(x, x): the monotone operator whose VI the MEP solves.
  Vector aggregate_operator(Round t, const Vector& x) const;
  /// sum_i f_i^t(x, y).
  double aggregate_value(Round t, const Vector& x, const Vector& y) const;
  /// sum_i g_i^t(x).
  Vector coupled_constraint(Round t, const Vector& x) const;
  Matrix coupled_jacobian(Round t, const Vector& x) const;
};

/// Psi family for the optimization reduction f_i^t(x, y) = psi_i^t(y) - psi_i^t(x).
struct SeparableFamily {
  int n = 0;
  Index m = 0;
  Index h = 0;
  FeasibleSet omega = FeasibleSet::box(1, 0.0, 1.0);
  std::function<double(int, Round, const Vector&)> psi;
  std::function<Vector(int, Round, const Vector&)> grad_psi;
  MepInstance::ConstraintOracle g;
  MepInstance::JacobianOracle jac_g;
  std::string name = "separable";
};

MepInstance builtin_separable(SeparableFamily family);

struct Example1Options {
  /// Number of agents whose g_i enter the coupled constraint (6 or 5).
  int constraint_count = 6;
};

/// Six agents on [-2, 2] with f_i^t(x,y) = (i/2)(y^2 - x^2) - 3(y - x) sin t
/// and g_i^t(x) = (sin t + 1) x^2 - (i/6) x, agents numbered 1..6.
MepInstance example1(const Example1Options& opts = {});

enum class EpsilonSign {
  Capacity,  ///< g_i(x) = x_i - eps_i (market capacity, feasible)
  Paper      ///< g_i(x) = x_i + eps_i as printed (empty X^t on [0,30]^5)
};

struct Example2Options {
  EpsilonSign sign = EpsilonSign::Capacity;
  /// Fixed demand weights q_i. Empty means q_i = x_i (revenue reading).
  std::optional<Vector> fixed_q;
};

/// Five-firm Nash-Cournot game in variational-inequality form on [0, 30]^5.
MepInstance example2(const Example2Options& opts = {});

/// Marginal expected cost d/dx_i C_i^t(x) of firm i (0-based) under the
/// example's parameters with the demand shock at its mean.
double example2_marginal_cost(const Example2Options& opts, int i, Round t, const Vector& x);
/// Expected cost C_i^t(x) with the demand shock at its mean.
double example2_expected_cost(const Example2Options& opts, int i, Round t, const Vector& x);

struct BoundEstimateOptions {
  int samples = 4000;
  std::uint64_t seed = 1;
  /// Rounds are drawn uniformly from [0, max_round).
  Round max_round = 10000;
  double inflation = 1.1;
  double floor = 1e-9;
};

/// Monte-Carlo suprema over Omega (plus its extreme points) and sampled
/// rounds, inflated by opts.inflation. kappa is the exact set radius.
/// Deterministic in the seed regardless of thread count.
BoundConstants estimate_bounds(const MepInstance& inst, const BoundEstimateOptions& opts = {});

/// Largest |f_i^t(x, x)| over sampled points.
double max_diagonal_value(const MepInstance& inst, int samples, std::uint64_t seed);
/// Largest |grad_2 f - central difference of f_value in y| over samples.
double max_gradient_fd_error(const MepInstance& inst, int samples, std::uint64_t seed,
                             double step = 1e-6);
/// Largest |jac_g - central difference of g| over samples.
double max_jacobian_fd_error(const MepInstance& inst, int samples, std::uint64_t seed,
                             double step = 1e-6);

}  // namespace omep
