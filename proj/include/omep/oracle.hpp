#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <string>

#include "omep/problem.hpp"
#include "omep/types.hpp"

namespace omep {

/// Zero-mean Gaussian gradient noise. For isotropic noise each of the d
/// components has standard deviation sigma * sqrt((1 - exp(-1/(2d))) / 2),
/// which makes E[exp(||xi||^2 / sigma^2)] = exp(1/4) <= e exactly.
struct NoiseModel {
  enum class Source {
    Isotropic,  ///< calibrated Gaussian on every gradient component
    Native      ///< the instance's own shock model for grad_2 f
  };

  Source source = Source::Isotropic;
  double sigma1 = 0.0;  ///< sub-Gaussian scale of the grad_2 f noise
  double sigma2 = 0.0;  ///< sub-Gaussian scale of the constraint Jacobian noise

  static NoiseModel isotropic(double sigma1, double sigma2);
  /// Uses inst.native_noise for grad_2 f and isotropic sigma2 for Jacobians.
  static NoiseModel native(const MepInstance& inst, double sigma2 = 0.0);

  bool is_zero() const { return sigma1 == 0.0 && sigma2 == 0.0; }
};

/// Per-component standard deviation for a d-dimensional isotropic draw.
double calibrated_component_std(double sigma, Index dim);

/// grad_2 f_i^t(x, x) plus noise from the stream keyed by (seed, i, t).
Vector noisy_grad2_f(const MepInstance& inst, int i, Round t, const Vector& x,
                     const NoiseModel& noise, std::uint64_t seed);
/// grad g_i^t(x) plus noise from an independent stream keyed by (seed, i, t).
Matrix noisy_jac_g(const MepInstance& inst, int i, Round t, const Vector& x,
                   const NoiseModel& noise, std::uint64_t seed);

struct SubgaussianReport {
  double estimate = 0.0;   ///< sample mean of exp(||xi||^2 / sigma^2)
  double band = 0.0;       ///< relative half-width, three standard errors
  double threshold = 0.0;  ///< e * (1 + band)
  bool pass = false;
};

/// Monte-Carlo estimate of the exponential moment of noise draws.
SubgaussianReport subgaussian_selfcheck(const std::function<Vector(std::mt19937_64&)>& sampler,
                                        double sigma, int samples, std::uint64_t seed);
/// Checks the isotropic primal channel of `noise` in dimension dim.
SubgaussianReport subgaussian_selfcheck(const NoiseModel& noise, Index dim, int samples,
                                        std::uint64_t seed);

struct SolveOptions {
  double tolerance = 1e-8;
  long max_iterations = 1000000;
  int probes = 1000;
  std::uint64_t seed = 17;
};

struct SolveResult {
  Vector x;
  double residual = 0.0;
  long iterations = 0;
  /// Smallest sum_i f_i^t(x, y) over probe points y in X^t.
  double min_probe_value = 0.0;
};

/// Centralized reference solution x*_t of the instantaneous MEP over
/// X^t = {x in Omega : sum_i g_i^t(x) <= 0}.
///
/// m == 1 boxes get the exact feasible interval and a bisection on the
/// monotone aggregate operator. Affine couplings on a box are handled by exact
/// projection; separable instances use projected gradient and the rest use
/// extragradient. Anything else falls back to a squared-hinge penalty
/// homotopy. The result is certified by probing sum_i f_i^t(x, y) >= -10 tol.
///
/// Throws InfeasibleError when X^t is empty and ConvergenceError when the
/// iteration cap is hit or the probe certificate fails.
SolveResult solve_instantaneous(const MepInstance& inst, Round t, const SolveOptions& opts = {});

/// Lazily evaluated, memoized reference path t -> x*_t. Thread-safe.
class CachedSolutionPath {
 public:
  CachedSolutionPath(MepInstance inst, SolveOptions opts);
  Vector operator()(Round t) const;
  std::map<Round, Vector> snapshot() const;
  void insert(Round t, Vector x);

 private:
  MepInstance inst_;
  SolveOptions opts_;
  mutable std::mutex mutex_;
  mutable std::map<Round, Vector> cache_;
};

/// Sidecar CSV with columns t, coord, x_star.
void write_solution_csv(const std::string& path, const std::map<Round, Vector>& solutions);
std::map<Round, Vector> read_solution_csv(const std::string& path);

}  // namespace omep
