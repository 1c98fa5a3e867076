#pragma once

#include <memory>
#include <random>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "omep/types.hpp"

namespace omep {

/// Compact convex feasible set Omega.
class FeasibleSet {
 public:
  enum class Kind { Box, Ball, Simplex, Product };

  static FeasibleSet box(Vector lower, Vector upper);
  static FeasibleSet box(Index dim, double lower, double upper);
  static FeasibleSet ball(Vector center, double radius);
  /// {x : sum x = 1, x_i >= floor}.
  static FeasibleSet simplex(Index dim, double floor = 0.0);
  static FeasibleSet product(std::vector<FeasibleSet> blocks);

  Kind kind() const { return kind_; }
  Index dim() const { return dim_; }

  /// kappa = max_{x in Omega} ||x||.
  double radius() const;
  /// Euclidean projection.
  Vector project(const Vector& v) const;
  bool contains(const Vector& v, double tol = 1e-12) const;
  /// Box midpoint, ball center, uniform point; blockwise for products.
  Vector center() const;
  /// Random point of the set; used for probes and Monte-Carlo suprema.
  Vector sample(std::mt19937_64& rng) const;
  /// Corner-like extreme points worth including in sup estimates.
  std::vector<Vector> extreme_points() const;

  const Vector& lower() const { return a_; }
  const Vector& upper() const { return b_; }
  double ball_radius() const { return r_; }
  double simplex_floor() const { return r_; }
  const std::vector<FeasibleSet>& blocks() const { return blocks_; }

 private:
  FeasibleSet(Kind kind, Index dim) : kind_(kind), dim_(dim) {}

  Kind kind_;
  Index dim_;
  Vector a_;  // box lower, ball center
  Vector b_;  // box upper
  double r_ = 0.0;  // ball radius or simplex floor
  std::vector<FeasibleSet> blocks_;
};

/// Euclidean projection of v onto {x : sum x = total, x >= 0}.
Vector project_scaled_simplex(const Vector& v, double total);

/// Distance-generating function phi and its Bregman divergence
/// D(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>.
///
/// Euclidean uses the un-halved form D = ||x - y||^2, so mu = 2 and K = 1.
/// Mahalanobis uses D = (x-y)^T P^{-1} (x-y). KL is restricted to a floored
/// simplex and uses D = sum x_i ln(x_i / y_i).
class BregmanGeometry {
 public:
  enum class Kind { Euclidean, Mahalanobis, KL };

  static BregmanGeometry euclidean();
  /// Rejects non-symmetric, non-positive-definite or badly conditioned
  /// (cond > 1e12) P.
  static BregmanGeometry mahalanobis(const Matrix& P);
  static BregmanGeometry kl(double floor = 1e-6);

  Kind kind() const { return kind_; }
  /// Strong-convexity modulus: D(x, y) >= (mu/2) ||x - y||^2.
  double mu() const { return mu_; }
  /// Quadratic upper bound: D(x, y) <= K ||x - y||^2 on the admissible set.
  double K() const { return K_; }
  double kl_floor() const { return floor_; }
  /// P^{-1} for Mahalanobis.
  const Matrix& metric() const { return metric_; }

  double phi(const Vector& x) const;
  Vector grad_phi(const Vector& x) const;
  double divergence(const Vector& x, const Vector& y) const;

  /// Checks that x is in the divergence's domain; throws Error otherwise.
  void check_domain(const Vector& x) const;

 private:
  explicit BregmanGeometry(Kind kind) : kind_(kind) {}

  Kind kind_;
  double mu_ = 2.0;
  double K_ = 1.0;
  double floor_ = 0.0;
  Matrix metric_;
};

struct InnerSolverOptions {
  double tolerance = 1e-10;
  int max_iterations = 10000;
};

/// argmin_{x in Omega} D(x, z) + <s, x>. Closed forms for Euclidean on every
/// set kind (via exact projection) and KL on the simplex; projected gradient
/// otherwise.
Vector mirror_argmin(const BregmanGeometry& geom, const FeasibleSet& set,
                     const Vector& z, const Vector& s,
                     const InnerSolverOptions& opts = {});

/// Projected-gradient solver for the same subproblem, used as the fallback
/// and as a cross-check for the closed forms. Throws ConvergenceError.
Vector mirror_argmin_iterative(const BregmanGeometry& geom, const FeasibleSet& set,
                               const Vector& z, const Vector& s,
                               const InnerSolverOptions& opts = {});

/// <s, xhat - w> - (D(w,z) - D(w,xhat) - D(xhat,z)). Nonpositive at the
/// minimizer for every w in Omega.
double three_point_gap(const BregmanGeometry& geom, const Vector& z, const Vector& s,
                       const Vector& xhat, const Vector& w);

/// ell = 2 sup ||grad phi|| over sampled points of Omega.
double estimate_divergence_lipschitz(const BregmanGeometry& geom,
                                     const FeasibleSet& set, int samples,
                                     std::uint64_t seed);

FeasibleSet feasible_set_from_json(const nlohmann::json& doc);
nlohmann::json feasible_set_to_json(const FeasibleSet& set);
BregmanGeometry geometry_from_json(const nlohmann::json& doc);
nlohmann::json geometry_to_json(const BregmanGeometry& geom);

}  // namespace omep
