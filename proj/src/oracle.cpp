#include "omep/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include "omep/random.hpp"

namespace omep {

// ---------------------------------------------------------------- noise

namespace {

constexpr std::uint64_t kPrimalChannel = 0x11;
constexpr std::uint64_t kJacobianChannel = 0x22;

Vector gaussian(Index dim, double std_dev, std::mt19937_64& rng) {
  Vector v(dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index k = 0; k < dim; ++k) v[k] = std_dev * normal(rng);
  return v;
}

}  // namespace

double calibrated_component_std(double sigma, Index dim) {
  if (sigma < 0.0 || dim < 1) throw Error("noise calibration needs sigma >= 0 and dim >= 1");
  return sigma * std::sqrt(-std::expm1(-0.5 / static_cast<double>(dim)) / 2.0);
}

NoiseModel NoiseModel::isotropic(double sigma1, double sigma2) {
  if (!(sigma1 >= 0.0) || !(sigma2 >= 0.0)) throw Error("noise scales must be >= 0");
  return {Source::Isotropic, sigma1, sigma2};
}

NoiseModel NoiseModel::native(const MepInstance& inst, double sigma2) {
  if (!inst.native_noise) throw Error("instance '" + inst.name + "' has no native noise model");
  if (!(sigma2 >= 0.0)) throw Error("noise scales must be >= 0");
  return {Source::Native, inst.native_noise_sigma, sigma2};
}

Vector noisy_grad2_f(const MepInstance& inst, int i, Round t, const Vector& x,
                     const NoiseModel& noise, std::uint64_t seed) {
  Vector grad = inst.grad2_f_diag(i, t, x);
  if (noise.sigma1 == 0.0) return grad;
  auto rng = make_stream(seed, {kPrimalChannel, static_cast<std::uint64_t>(i),
                                static_cast<std::uint64_t>(t)});
  if (noise.source == NoiseModel::Source::Native) return grad + inst.native_noise(i, t, x, rng);
  return grad + gaussian(inst.m, calibrated_component_std(noise.sigma1, inst.m), rng);
}

Matrix noisy_jac_g(const MepInstance& inst, int i, Round t, const Vector& x,
                   const NoiseModel& noise, std::uint64_t seed) {
  Matrix jac = inst.jac_g(i, t, x);
  if (noise.sigma2 == 0.0) return jac;
  auto rng = make_stream(seed, {kJacobianChannel, static_cast<std::uint64_t>(i),
                                static_cast<std::uint64_t>(t)});
  const Index d = jac.size();
  const Vector flat = gaussian(d, calibrated_component_std(noise.sigma2, d), rng);
  return jac + Eigen::Map<const Matrix>(flat.data(), jac.rows(), jac.cols());
}

SubgaussianReport subgaussian_selfcheck(const std::function<Vector(std::mt19937_64&)>& sampler,
                                        double sigma, int samples, std::uint64_t seed) {
  if (samples < 2) throw Error("self-check needs samples");
  std::mt19937_64 rng(seed);
  double mean = 0.0, m2 = 0.0;
  for (int k = 0; k < samples; ++k) {
    const Vector xi = sampler(rng);
    const double sq = xi.squaredNorm();
    const double v = sq == 0.0 ? 1.0 : std::exp(sq / (sigma * sigma));
    const double delta = v - mean;
    mean += delta / (k + 1);
    m2 += delta * (v - mean);
  }
  SubgaussianReport r;
  r.estimate = mean;
  const double se = std::sqrt(m2 / (samples - 1) / samples);
  r.band = std::isfinite(se) ? 3.0 * se / mean : std::numeric_limits<double>::infinity();
  r.threshold = std::exp(1.0) * (1.0 + r.band);
  r.pass = std::isfinite(mean) && mean <= r.threshold;
  return r;
}

SubgaussianReport subgaussian_selfcheck(const NoiseModel& noise, Index dim, int samples,
                                        std::uint64_t seed) {
  const double std_dev = calibrated_component_std(noise.sigma1, dim);
  return subgaussian_selfcheck([&](std::mt19937_64& rng) { return gaussian(dim, std_dev, rng); },
                               noise.sigma1, samples, seed);
}

// ---------------------------------------------------------------- reference solver

namespace {

using Projector = std::function<Vector(const Vector&)>;

double max_violation(const MepInstance& inst, Round t, const Vector& x) {
  return inst.coupled_constraint(t, x).maxCoeff();
}

// Feasible interval of a 1-D box under convex constraints.
std::pair<double, double> feasible_interval(const MepInstance& inst, Round t) {
  const double lo = inst.omega.lower()[0];
  const double hi = inst.omega.upper()[0];
  auto G = [&](double v) { return max_violation(inst, t, Vector::Constant(1, v)); };
  // Ternary search on the convex max_k G_k for a feasible anchor.
  double a = lo, b = hi;
  for (int it = 0; it < 200; ++it) {
    const double m1 = a + (b - a) / 3.0;
    const double m2 = b - (b - a) / 3.0;
    if (G(m1) <= G(m2)) b = m2; else a = m1;
  }
  double anchor = 0.5 * (a + b);
  for (double cand : {lo, hi})
    if (G(cand) < G(anchor)) anchor = cand;
  if (G(anchor) > 0.0)
    throw InfeasibleError("coupled feasible set X^t is empty at round " + std::to_string(t));
  auto edge = [&](double outside) {
    if (G(outside) <= 0.0) return outside;
    double in = anchor, out = outside;
    for (int it = 0; it < 200 && in != out; ++it) {
      const double mid = 0.5 * (in + out);
      if (mid == in || mid == out) break;
      if (G(mid) <= 0.0) in = mid; else out = mid;
    }
    return in;
  };
  return {edge(lo), edge(hi)};
}

Projector box_halfspace_projector(const MepInstance& inst, Round t) {
  const auto [M, b] = inst.affine_coupling(t);
  const FeasibleSet& box = inst.omega;
  for (Index r = 0; r < M.rows(); ++r) {
    double lowest = 0.0;
    for (Index k = 0; k < M.cols(); ++k)
      lowest += std::min(M(r, k) * box.lower()[k], M(r, k) * box.upper()[k]);
    if (lowest > b[r])
      throw InfeasibleError("coupled feasible set X^t is empty at round " + std::to_string(t));
  }
  auto one_halfspace = [&box](const Vector& v, const Vector& a, double rhs) -> Vector {
    auto at = [&](double nu) { return box.project(v - nu * a); };
    if (a.dot(at(0.0)) <= rhs) return at(0.0);
    double lo = 0.0, hi = 1.0;
    while (a.dot(at(hi)) > rhs) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      if (a.dot(at(mid)) > rhs) lo = mid; else hi = mid;
    }
    return at(hi);
  };
  if (M.rows() == 1) {
    Vector a = M.row(0).transpose();
    const double rhs = b[0];
    return [one_halfspace, a, rhs](const Vector& v) { return one_halfspace(v, a, rhs); };
  }
  // Dykstra over the individual box-intersected halfspaces.
  return [one_halfspace, M, b](const Vector& v) {
    const auto rows = static_cast<std::size_t>(M.rows());
    std::vector<Vector> incr(rows, Vector::Zero(v.size()));
    Vector x = v;
    for (int sweep = 0; sweep < 100000; ++sweep) {
      const Vector before = x;
      for (std::size_t r = 0; r < rows; ++r) {
        const Vector shifted = x + incr[r];
        const Vector next = one_halfspace(shifted, M.row(static_cast<Index>(r)).transpose(),
                                          b[static_cast<Index>(r)]);
        incr[r] = shifted - next;
        x = next;
      }
      if ((x - before).norm() < 1e-15 * (1.0 + x.norm())) break;
    }
    return x;
  };
}

std::optional<Projector> coupled_projector(const MepInstance& inst, Round t) {
  if (inst.affine_coupling && inst.omega.kind() == FeasibleSet::Kind::Box)
    return box_halfspace_projector(inst, t);
  return std::nullopt;
}

double natural_residual(const Vector& x, const Vector& F, const Projector& proj) {
  return (x - proj(x - F)).norm();
}

struct IterateOutcome {
  Vector x;
  double residual;
  long iterations;
};

IterateOutcome extragradient(const std::function<Vector(const Vector&)>& F, const Projector& proj,
                             Vector x, double target, long cap) {
  double tau = 1.0;
  Vector Fx = F(x);
  double residual = natural_residual(x, Fx, proj);
  long it = 0;
  while (residual > target && it < cap) {
    ++it;
    Vector y, Fy;
    for (;;) {
      y = proj(x - tau * Fx);
      Fy = F(y);
      if (tau * (Fx - Fy).norm() <= 0.9 * (x - y).norm() || (x - y).norm() == 0.0) break;
      tau *= 0.5;
    }
    x = proj(x - tau * Fy);
    Fx = F(x);
    residual = natural_residual(x, Fx, proj);
  }
  return {x, residual, it};
}

// Projected gradient with backtracking on the aggregate objective
// Psi(y) - Psi(ref) = sum_i f_i(ref, y).
IterateOutcome projected_gradient(const MepInstance& inst, Round t, const Projector& proj,
                                  Vector x, double target, long cap) {
  const Vector ref = x;
  auto value = [&](const Vector& y) { return inst.aggregate_value(t, ref, y); };
  auto F = [&](const Vector& y) { return inst.aggregate_operator(t, y); };
  double step = 1.0;
  Vector Fx = F(x);
  double residual = natural_residual(x, Fx, proj);
  long it = 0;
  while (residual > target && it < cap) {
    ++it;
    const double fx = value(x);
    Vector next;
    for (;;) {
      next = proj(x - step * Fx);
      const Vector d = next - x;
      if (value(next) <= fx + Fx.dot(d) + d.squaredNorm() / (2.0 * step) || step < 1e-300) break;
      step *= 0.5;
    }
    x = next;
    Fx = F(x);
    residual = natural_residual(x, Fx, proj);
    step *= 2.0;
  }
  return {x, residual, it};
}

double bisect_monotone(const MepInstance& inst, Round t, double a, double b) {
  auto F = [&](double v) { return inst.aggregate_operator(t, Vector::Constant(1, v))[0]; };
  if (F(a) >= 0.0) return a;
  if (F(b) <= 0.0) return b;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid == a || mid == b) break;
    if (F(mid) > 0.0) b = mid; else a = mid;
  }
  return 0.5 * (a + b);
}

double probe_certificate(const MepInstance& inst, Round t, const Vector& x,
                         const std::optional<Projector>& proj,
                         const std::optional<std::pair<double, double>>& interval,
                         const SolveOptions& opts) {
  auto rng = make_stream(opts.seed, {0xce47u, static_cast<std::uint64_t>(t)});
  const Vector Fx = inst.aggregate_operator(t, x);
  auto value = [&](const Vector& y) {
    return inst.f_value ? inst.aggregate_value(t, x, y) : Fx.dot(y - x);
  };
  double worst = std::numeric_limits<double>::infinity();
  int accepted = 0;
  for (int attempt = 0; accepted < opts.probes && attempt < 100 * opts.probes; ++attempt) {
    Vector y = inst.omega.sample(rng);
    if (interval) {
      std::uniform_real_distribution<double> u(interval->first, interval->second);
      y[0] = u(rng);
    } else if (proj && attempt % 2 == 0) {
      y = (*proj)(y);
    } else if (max_violation(inst, t, y) > 0.0) {
      continue;
    }
    worst = std::min(worst, value(y));
    ++accepted;
  }
  return worst;
}

SolveResult solve_once(const MepInstance& inst, Round t, const SolveOptions& opts,
                       double target) {
  SolveResult out;
  if (inst.m == 1 && inst.omega.kind() == FeasibleSet::Kind::Box) {
    const auto interval = feasible_interval(inst, t);
    out.x = Vector::Constant(1, bisect_monotone(inst, t, interval.first, interval.second));
    auto clip = [interval](const Vector& v) {
      return Vector::Constant(1, std::clamp(v[0], interval.first, interval.second)).eval();
    };
    out.residual = natural_residual(out.x, inst.aggregate_operator(t, out.x), clip);
    out.min_probe_value = probe_certificate(inst, t, out.x, std::nullopt, interval, opts);
    return out;
  }
  const auto proj = coupled_projector(inst, t);
  IterateOutcome it;
  if (proj) {
    const Vector start = (*proj)(inst.omega.center());
    if (inst.structure == Structure::Separable && inst.f_value)
      it = projected_gradient(inst, t, *proj, start, target, opts.max_iterations);
    else
      it = extragradient([&](const Vector& y) { return inst.aggregate_operator(t, y); }, *proj,
                         start, target, opts.max_iterations);
  } else {
    // Squared-hinge penalty homotopy over Omega.
    Projector omega_proj = [&](const Vector& v) { return inst.omega.project(v); };
    Vector x = inst.omega.center();
    long total = 0;
    for (double rho = 1.0; rho <= 1e10; rho *= 10.0) {
      auto F = [&](const Vector& y) -> Vector {
        const Vector G = inst.coupled_constraint(t, y);
        const Matrix J = inst.coupled_jacobian(t, y);
        return inst.aggregate_operator(t, y) + 2.0 * rho * (J * G.cwiseMax(0.0));
      };
      it = extragradient(F, omega_proj, x, target, opts.max_iterations - total);
      x = it.x;
      total += it.iterations;
      if (max_violation(inst, t, x) <= opts.tolerance) break;
    }
    if (max_violation(inst, t, x) > opts.tolerance)
      throw InfeasibleError("penalty homotopy could not reach X^t at round " + std::to_string(t));
    it.iterations = total;
  }
  if (it.residual > target)
    throw ConvergenceError("reference solver hit its iteration cap at round " + std::to_string(t),
                           it.residual);
  out.x = it.x;
  out.residual = it.residual;
  out.iterations = it.iterations;
  out.min_probe_value = probe_certificate(inst, t, out.x, proj, std::nullopt, opts);
  return out;
}

}  // namespace

SolveResult solve_instantaneous(const MepInstance& inst, Round t, const SolveOptions& opts) {
  inst.validate();
  if (!(opts.tolerance > 0.0)) throw Error("solver tolerance must be positive");
  double target = opts.tolerance * 1e-2;
  SolveResult r;
  for (int refine = 0; refine < 4; ++refine, target *= 1e-2) {
    r = solve_once(inst, t, opts, target);
    if (r.min_probe_value >= -10.0 * opts.tolerance) return r;
  }
  throw ConvergenceError("reference solution failed its probe certificate at round " +
                             std::to_string(t),
                         -r.min_probe_value);
}

CachedSolutionPath::CachedSolutionPath(MepInstance inst, SolveOptions opts)
    : inst_(std::move(inst)), opts_(opts) {}

Vector CachedSolutionPath::operator()(Round t) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(t); it != cache_.end()) return it->second;
  }
  Vector x = solve_instantaneous(inst_, t, opts_).x;
  std::lock_guard lock(mutex_);
  return cache_.emplace(t, std::move(x)).first->second;
}

std::map<Round, Vector> CachedSolutionPath::snapshot() const {
  std::lock_guard lock(mutex_);
  return cache_;
}

void CachedSolutionPath::insert(Round t, Vector x) {
  std::lock_guard lock(mutex_);
  cache_[t] = std::move(x);
}

void write_solution_csv(const std::string& path, const std::map<Round, Vector>& solutions) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "t,coord,x_star\n" << std::setprecision(17);
  for (const auto& [t, x] : solutions)
    for (Index c = 0; c < x.size(); ++c) out << t << ',' << c << ',' << x[c] << '\n';
}

std::map<Round, Vector> read_solution_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  std::map<Round, std::vector<double>> raw;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    Round t;
    Index c;
    double v;
    char comma;
    if (!(row >> t >> comma >> c >> comma >> v)) throw Error("malformed solution row: " + line);
    auto& coords = raw[t];
    if (static_cast<Index>(coords.size()) != c) throw Error("solution coords out of order");
    coords.push_back(v);
  }
  std::map<Round, Vector> out;
  for (auto& [t, coords] : raw)
    out[t] = Eigen::Map<const Vector>(coords.data(), static_cast<Index>(coords.size()));
  return out;
}

}  // namespace omep
