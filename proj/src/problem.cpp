#include "omep/problem.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "omep/random.hpp"

namespace omep {

nlohmann::json bounds_to_json(const BoundConstants& b) {
  return {{"kappa", b.kappa}, {"kappa1", b.kappa1}, {"kappa2", b.kappa2},
          {"kappa3", b.kappa3}, {"L", b.L}};
}

void MepInstance::validate() const {
  if (n < 2) throw Error("an instance needs at least 2 agents");
  if (m < 1 || h < 1) throw Error("decision and constraint dimensions must be >= 1");
  if (omega.dim() != m) throw Error("feasible set dimension differs from m");
  if (!grad2_f || !g || !jac_g) throw Error("instance '" + name + "' is missing an oracle");
}

Vector MepInstance::aggregate_operator(Round t, const Vector& x) const {
  Vector out = Vector::Zero(m);
  for (int i = 0; i < n; ++i) out += grad2_f(i, t, x, x);
  return out;
}

double MepInstance::aggregate_value(Round t, const Vector& x, const Vector& y) const {
  if (!f_value) throw Error("instance '" + name + "' has no bifunction values");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += f_value(i, t, x, y);
  return sum;
}

Vector MepInstance::coupled_constraint(Round t, const Vector& x) const {
  Vector out = Vector::Zero(h);
  for (int i = 0; i < n; ++i) out += g(i, t, x);
  return out;
}

Matrix MepInstance::coupled_jacobian(Round t, const Vector& x) const {
  Matrix out = Matrix::Zero(m, h);
  for (int i = 0; i < n; ++i) out += jac_g(i, t, x);
  return out;
}

MepInstance builtin_separable(SeparableFamily family) {
  if (!family.psi || !family.grad_psi) throw Error("separable family needs psi and its gradient");
  MepInstance inst;
  inst.name = family.name;
  inst.n = family.n;
  inst.m = family.m;
  inst.h = family.h;
  inst.omega = family.omega;
  inst.structure = Structure::Separable;
  auto psi = family.psi;
  auto grad_psi = family.grad_psi;
  inst.grad2_f = [grad_psi](int i, Round t, const Vector&, const Vector& y) {
    return grad_psi(i, t, y);
  };
  inst.f_value = [psi](int i, Round t, const Vector& x, const Vector& y) {
    return psi(i, t, y) - psi(i, t, x);
  };
  inst.g = std::move(family.g);
  inst.jac_g = std::move(family.jac_g);
  inst.validate();
  return inst;
}

MepInstance example1(const Example1Options& opts) {
  if (opts.constraint_count != 5 && opts.constraint_count != 6)
    throw Error("example 1 constraint count must be 5 or 6");
  const int active = opts.constraint_count;
  SeparableFamily fam;
  fam.name = "example1";
  fam.n = 6;
  fam.m = 1;
  fam.h = 1;
  fam.omega = FeasibleSet::box(1, -2.0, 2.0);
  fam.psi = [](int i, Round t, const Vector& x) {
    const double w = i + 1;
    return 0.5 * w * x[0] * x[0] - 3.0 * x[0] * std::sin(static_cast<double>(t));
  };
  fam.grad_psi = [](int i, Round t, const Vector& x) {
    const double w = i + 1;
    return Vector::Constant(1, w * x[0] - 3.0 * std::sin(static_cast<double>(t)));
  };
  fam.g = [active](int i, Round t, const Vector& x) -> Vector {
    if (i >= active) return Vector::Zero(1).eval();
    const double s = std::sin(static_cast<double>(t));
    return Vector::Constant(1, (s + 1.0) * x[0] * x[0] - (i + 1) / 6.0 * x[0]);
  };
  fam.jac_g = [active](int i, Round t, const Vector& x) -> Matrix {
    if (i >= active) return Matrix::Zero(1, 1).eval();
    const double s = std::sin(static_cast<double>(t));
    return Matrix::Constant(1, 1, 2.0 * (s + 1.0) * x[0] - (i + 1) / 6.0);
  };
  MepInstance inst = builtin_separable(std::move(fam));
  if (active == 5) inst.name = "example1-5";
  inst.solution_path = [](Round t) {
    return Vector::Constant(1, 6.0 * std::sin(static_cast<double>(t)) / 7.0);
  };
  return inst;
}

namespace {

constexpr double kExample2Eps[5] = {10.0, 15.0, 8.0, 8.0, 15.0};
constexpr double kShockVariance = 0.5;

struct CournotRound {
  double k;
  double l;
};

CournotRound cournot(int i, Round t) {
  const double s = std::sin(static_cast<double>(t) / 6.0);
  const double w = i + 1;
  return {5.0 * s, 5.0 * w + 45.0 - 2.5 * w * s};
}

}  // namespace

double example2_expected_cost(const Example2Options& opts, int i, Round t, const Vector& x) {
  const auto [k, l] = cournot(i, t);
  const double demand = l - x.sum();
  const double q = opts.fixed_q ? (*opts.fixed_q)[i] : x[i];
  return k * x[i] - q * demand;
}

double example2_marginal_cost(const Example2Options& opts, int i, Round t, const Vector& x) {
  const auto [k, l] = cournot(i, t);
  if (opts.fixed_q) return k + (*opts.fixed_q)[i];
  return k - (l - x.sum()) + x[i];
}

MepInstance example2(const Example2Options& opts) {
  if (opts.fixed_q && opts.fixed_q->size() != 5) throw Error("example 2 needs 5 q weights");
  MepInstance inst;
  inst.name = "example2";
  inst.n = 5;
  inst.m = 5;
  inst.h = 1;
  inst.omega = FeasibleSet::box(5, 0.0, 30.0);
  inst.structure = Structure::VariationalInequality;
  inst.grad2_f = [opts](int i, Round t, const Vector& x, const Vector&) {
    Vector v = Vector::Zero(5);
    v[i] = example2_marginal_cost(opts, i, t, x);
    return v;
  };
  inst.f_value = [opts](int i, Round t, const Vector& x, const Vector& y) {
    return example2_marginal_cost(opts, i, t, x) * (y[i] - x[i]);
  };
  const double sign = opts.sign == EpsilonSign::Capacity ? -1.0 : 1.0;
  inst.g = [sign](int i, Round, const Vector& x) {
    return Vector::Constant(1, x[i] + sign * kExample2Eps[i]);
  };
  inst.jac_g = [](int i, Round, const Vector&) {
    Matrix j = Matrix::Zero(5, 1);
    j(i, 0) = 1.0;
    return j;
  };
  double eps_total = 0.0;
  for (double e : kExample2Eps) eps_total += e;
  inst.affine_coupling = [sign, eps_total](Round) {
    return std::make_pair(Matrix::Ones(1, 5).eval(), Vector::Constant(1, -sign * eps_total).eval());
  };
  inst.solution_path = [](Round t) {
    const double s = std::sin(static_cast<double>(t) / 6.0);
    Vector x(5);
    x << std::abs(35.0 / 12.0 * s), 5.0 + 5.0 / 12.0 * s, 10.0 - 25.0 / 12.0 * s,
        15.0 - 55.0 / 12.0 * s, 20.0 - 85.0 / 12.0 * s;
    return x;
  };
  if (!opts.fixed_q) {
    // The shock theta_i^t enters firm i's marginal cost as -theta.
    inst.native_noise = [](int i, Round, const Vector&, std::mt19937_64& rng) {
      std::normal_distribution<double> theta(0.0, std::sqrt(kShockVariance));
      Vector v = Vector::Zero(5);
      v[i] = -theta(rng);
      return v;
    };
    // E exp(theta^2 / sigma^2) = exp(1/4) for a 1-D Gaussian.
    inst.native_noise_sigma = std::sqrt(2.0 * kShockVariance / -std::expm1(-0.5));
  }
  inst.validate();
  return inst;
}

namespace {

struct SamplePoint {
  Round t;
  Vector x;
  Vector y;
  Vector z;
};

SamplePoint draw_sample(const MepInstance& inst, const std::vector<Vector>& extremes,
                        const BoundEstimateOptions& opts, int k) {
  auto rng = make_stream(opts.seed, {0xb0u, static_cast<std::uint64_t>(k)});
  std::uniform_int_distribution<Round> round(0, std::max<Round>(opts.max_round - 1, 0));
  SamplePoint p;
  p.t = round(rng);
  const auto e = static_cast<int>(extremes.size());
  // The first sweeps pair extreme points with each other; later samples are
  // uniform over the set.
  if (k < 4 * e) {
    p.x = extremes[static_cast<std::size_t>(k % e)];
    p.y = extremes[static_cast<std::size_t>((k / e + k) % e)];
  } else {
    p.x = inst.omega.sample(rng);
    p.y = inst.omega.sample(rng);
  }
  p.z = inst.omega.sample(rng);
  return p;
}

std::string where(int i, Round t) {
  return "agent " + std::to_string(i) + ", round " + std::to_string(t);
}

}  // namespace

BoundConstants estimate_bounds(const MepInstance& inst, const BoundEstimateOptions& opts) {
  inst.validate();
  if (opts.samples < 1000) throw Error("estimate_bounds needs at least 1000 samples");
  const auto extremes = inst.omega.extreme_points();
  double k1 = 0.0, k2 = 0.0, k3 = 0.0, lip = 0.0;
  bool failed = false;
  std::string failure;
#pragma omp parallel for schedule(static) reduction(max : k1, k2, k3, lip)
  for (int k = 0; k < opts.samples; ++k) {
    const SamplePoint p = draw_sample(inst, extremes, opts, k);
    for (int i = 0; i < inst.n; ++i) {
      const Vector gf = inst.grad2_f(i, p.t, p.x, p.y);
      const Vector gv = inst.g(i, p.t, p.x);
      const Matrix jg = inst.jac_g(i, p.t, p.x);
      double lip_here = 0.0;
      bool finite = gf.allFinite() && gv.allFinite() && jg.allFinite();
      if (inst.f_value) {
        const double dist = (p.x - p.z).norm();
        if (dist > 1e-12) {
          const double diff = inst.f_value(i, p.t, p.x, p.y) - inst.f_value(i, p.t, p.z, p.y);
          finite = finite && std::isfinite(diff);
          lip_here = std::abs(diff) / dist;
        }
      }
      if (!finite) {
#pragma omp critical(omep_bounds_failure)
        if (!failed) {
          failed = true;
          failure = where(i, p.t);
        }
        continue;
      }
      k1 = std::max(k1, gf.norm());
      k2 = std::max(k2, gv.norm());
      k3 = std::max(k3, jg.colwise().norm().maxCoeff());
      lip = std::max(lip, lip_here);
    }
  }
  if (failed) throw Error("oracle returned a non-finite value at " + failure);
  auto inflate = [&](double v) { return std::max(opts.inflation * v, opts.floor); };
  return {inst.omega.radius(), inflate(k1), inflate(k2), inflate(k3), inflate(lip)};
}

double max_diagonal_value(const MepInstance& inst, int samples, std::uint64_t seed) {
  if (!inst.f_value) throw Error("instance has no bifunction values");
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    auto rng = make_stream(seed, {0xd1u, static_cast<std::uint64_t>(k)});
    const Vector x = inst.omega.sample(rng);
    const Round t = static_cast<Round>(rng() % 10000);
    for (int i = 0; i < inst.n; ++i) worst = std::max(worst, std::abs(inst.f_value(i, t, x, x)));
  }
  return worst;
}

double max_gradient_fd_error(const MepInstance& inst, int samples, std::uint64_t seed,
                             double step) {
  if (!inst.f_value) throw Error("instance has no bifunction values");
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    auto rng = make_stream(seed, {0xf1u, static_cast<std::uint64_t>(k)});
    const Vector x = inst.omega.sample(rng);
    const Vector y = inst.omega.sample(rng);
    const Round t = static_cast<Round>(rng() % 10000);
    for (int i = 0; i < inst.n; ++i) {
      const Vector analytic = inst.grad2_f(i, t, x, y);
      for (Index c = 0; c < inst.m; ++c) {
        Vector up = y, down = y;
        up[c] += step;
        down[c] -= step;
        const double fd = (inst.f_value(i, t, x, up) - inst.f_value(i, t, x, down)) / (2 * step);
        worst = std::max(worst, std::abs(fd - analytic[c]));
      }
    }
  }
  return worst;
}

double max_jacobian_fd_error(const MepInstance& inst, int samples, std::uint64_t seed,
                             double step) {
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    auto rng = make_stream(seed, {0xf2u, static_cast<std::uint64_t>(k)});
    const Vector x = inst.omega.sample(rng);
    const Round t = static_cast<Round>(rng() % 10000);
    for (int i = 0; i < inst.n; ++i) {
      const Matrix analytic = inst.jac_g(i, t, x);
      for (Index c = 0; c < inst.m; ++c) {
        Vector up = x, down = x;
        up[c] += step;
        down[c] -= step;
        const Vector fd = (inst.g(i, t, up) - inst.g(i, t, down)) / (2 * step);
        worst = std::max(worst, (fd - analytic.row(c).transpose()).cwiseAbs().maxCoeff());
      }
    }
  }
  return worst;
}

}  // namespace omep
