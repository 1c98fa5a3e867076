#include "omep/engine.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>

#include <omp.h>

#include <nlohmann/json.hpp>

namespace omep {

// ---------------------------------------------------------------- schedule

StepSchedule::StepSchedule(Kind kind, double a, double b, double scale, double offset,
                           Round horizon)
    : kind_(kind), a_(a), b_(b), scale_(scale), offset_(offset), horizon_(horizon) {
  if (!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0))
    throw Error("step exponents must satisfy a, b in (0, 1)");
  if (!(b < a && a < 2.0 * b))
    throw Error("step exponents must satisfy b < a < 2b (got a=" + std::to_string(a) +
                ", b=" + std::to_string(b) + ")");
  if (!(scale > 0.0) || !(offset >= 1.0)) throw Error("step base needs scale > 0, offset >= 1");
  if (horizon < 0) throw Error("horizon must be >= 0");
}

StepSchedule StepSchedule::time_varying(double a, double b, double scale, double offset) {
  return StepSchedule(Kind::TimeVarying, a, b, scale, offset, 0);
}

StepSchedule StepSchedule::fixed(double a, double b, Round horizon, double offset) {
  return StepSchedule(Kind::Fixed, a, b, 1.0, offset, horizon);
}

double StepSchedule::base(Round t) const {
  if (kind_ == Kind::Fixed) return static_cast<double>(horizon_) + offset_;
  return scale_ * static_cast<double>(t) + offset_;
}

double StepSchedule::zeta(Round t) const { return std::pow(base(t), -a_); }
double StepSchedule::eta(Round t) const { return std::pow(base(t), -b_); }

StepSchedule StepSchedule::with_exponents(double a, double b) const {
  return StepSchedule(kind_, a, b, scale_, offset_, horizon_);
}

StepSchedule StepSchedule::with_horizon(Round horizon) const {
  return StepSchedule(kind_, a_, b_, scale_, offset_, horizon);
}

nlohmann::json schedule_to_json(const StepSchedule& s) {
  nlohmann::json j{{"variant", s.kind() == StepSchedule::Kind::Fixed ? "fixed" : "time_varying"},
                   {"a", s.a()},
                   {"b", s.b()},
                   {"offset", s.offset()}};
  if (s.kind() == StepSchedule::Kind::TimeVarying) j["scale"] = s.scale();
  return j;
}

StepSchedule schedule_from_json(const nlohmann::json& doc, Round horizon) {
  const auto variant = doc.value("variant", std::string("time_varying"));
  const double a = doc.value("a", 0.5);
  const double b = doc.value("b", 1.0 / 3.0);
  const double offset = doc.value("offset", 1.0);
  if (variant == "fixed") return StepSchedule::fixed(a, b, horizon, offset);
  if (variant == "time_varying")
    return StepSchedule::time_varying(a, b, doc.value("scale", 1.0), offset);
  throw Error("unknown schedule variant '" + variant + "'");
}

std::string to_string(Algorithm a) { return a == Algorithm::Exact ? "exact" : "stochastic"; }

// ---------------------------------------------------------------- steps

Vector primal_step(const BregmanGeometry& geom, const FeasibleSet& omega, const Vector& z,
                   const Vector& grad_f, const Matrix& jac_g, const Vector& y, double zeta,
                   double eta, const InnerSolverOptions& inner) {
  if (zeta > eta) throw Error("primal step requires zeta <= eta");
  if ((y.array() < 0.0).any()) throw Error("primal step requires a nonnegative dual vector");
  return mirror_argmin(geom, omega, z, zeta * grad_f + eta * (jac_g * y), inner);
}

Matrix dual_step(const GraphSequence& seq, Round t, const Matrix& y_all, const Matrix& g_vals,
                 double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw Error("dual step requires eta in (0, 1]");
  if (y_all.rows() != g_vals.rows() || y_all.cols() != g_vals.cols())
    throw Error("dual step: shape mismatch");
  return ((1.0 - eta) * mix(seq, t, y_all) + eta * g_vals).cwiseMax(0.0);
}

Matrix default_initial_states(const MepInstance& inst) {
  return inst.omega.center().transpose().replicate(inst.n, 1);
}

// ---------------------------------------------------------------- rounds

namespace {

struct RoundContext {
  const MepInstance& inst;
  const GraphSequence& seq;
  const EngineOptions& opts;
  Algorithm algorithm;
  const NoiseModel* noise;
  std::uint64_t seed;
};

struct RoundOutput {
  Matrix x_next, y_next, z, grad, innovation;
};

std::string at(int i, Round t) {
  return " (agent " + std::to_string(i) + ", round " + std::to_string(t) + ")";
}

// Everything agent i does in round t. Reads only round-t state, writes only
// row i of the outputs.
void agent_update(const RoundContext& ctx, Round t, double zeta, double eta, const Matrix& x,
                  const Matrix& y, int i, RoundOutput& out) {
  const Matrix& A = ctx.seq.at(t).weights();
  const MepInstance& inst = ctx.inst;
  Vector z = Vector::Zero(inst.m);
  Vector y_mix = Vector::Zero(inst.h);
  for (int j = 0; j < inst.n; ++j) {
    const double a = A(i, j);
    if (a == 0.0) continue;
    z += a * x.row(j).transpose();
    y_mix += a * y.row(j).transpose();
  }
  const Vector xi = x.row(i).transpose();
  const Vector yi = y.row(i).transpose();
  Vector grad;
  Matrix jac;
  if (ctx.algorithm == Algorithm::Exact) {
    grad = inst.grad2_f_diag(i, t, xi);
    jac = inst.jac_g(i, t, xi);
  } else {
    grad = noisy_grad2_f(inst, i, t, xi, *ctx.noise, ctx.seed);
    jac = noisy_jac_g(inst, i, t, xi, *ctx.noise, ctx.seed);
  }
  const Vector gi = inst.g(i, t, xi);
  if (grad.size() != inst.m || jac.rows() != inst.m || jac.cols() != inst.h ||
      gi.size() != inst.h)
    throw Error("oracle returned a wrongly sized value" + at(i, t));
  if (!grad.allFinite() || !jac.allFinite() || !gi.allFinite())
    throw Error("oracle returned a non-finite value" + at(i, t));

  out.z.row(i) = z.transpose();
  out.grad.row(i) = grad.transpose();
  out.innovation.row(i) = gi.transpose();
  out.x_next.row(i) =
      primal_step(ctx.opts.geometry, inst.omega, z, grad, jac, yi, zeta, eta, ctx.opts.inner)
          .transpose();
  out.y_next.row(i) = ((1.0 - eta) * y_mix + eta * gi).cwiseMax(0.0).transpose();
}

RoundOutput make_output(const MepInstance& inst) {
  return {Matrix(inst.n, inst.m), Matrix(inst.n, inst.h), Matrix(inst.n, inst.m),
          Matrix(inst.n, inst.m), Matrix(inst.n, inst.h)};
}

RoundOutput round_serial(const RoundContext& ctx, Round t, double zeta, double eta,
                         const Matrix& x, const Matrix& y) {
  RoundOutput out = make_output(ctx.inst);
  for (int i = 0; i < ctx.inst.n; ++i) agent_update(ctx, t, zeta, eta, x, y, i, out);
  return out;
}

RoundOutput round_openmp(const RoundContext& ctx, Round t, double zeta, double eta,
                         const Matrix& x, const Matrix& y) {
  RoundOutput out = make_output(ctx.inst);
  const int n = ctx.inst.n;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  const int threads = ctx.opts.threads > 0 ? ctx.opts.threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
  for (int i = 0; i < n; ++i) {
    try {
      agent_update(ctx, t, zeta, eta, x, y, i, out);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

RunTrace run(const RoundContext& ctx, const StepSchedule& sched, Round horizon,
             const Matrix& init) {
  const MepInstance& inst = ctx.inst;
  inst.validate();
  if (ctx.seq.agents() != inst.n)
    throw Error("graph has " + std::to_string(ctx.seq.agents()) + " agents, instance has " +
                std::to_string(inst.n));
  if (horizon < 0) throw Error("horizon must be >= 0");
  Matrix x0 = init.size() == 0 ? default_initial_states(inst) : init;
  if (x0.rows() != inst.n || x0.cols() != inst.m)
    throw Error("initial states must be " + std::to_string(inst.n) + " x " +
                std::to_string(inst.m));
  for (int i = 0; i < inst.n; ++i)
    if (!inst.omega.contains(x0.row(i).transpose(), 1e-12))
      throw Error("initial state of agent " + std::to_string(i) + " lies outside Omega");

  RunTrace trace;
  trace.instance = inst.name;
  trace.algorithm = ctx.algorithm;
  trace.seed = ctx.seed;
  trace.x.reserve(static_cast<std::size_t>(horizon + 1));
  trace.y.reserve(static_cast<std::size_t>(horizon + 1));
  trace.x.push_back(std::move(x0));
  trace.y.push_back(Matrix::Zero(inst.n, inst.h));
  for (Round t = 0; t <= horizon; ++t) {
    trace.zeta.push_back(sched.zeta(t));
    trace.eta.push_back(sched.eta(t));
  }
  for (Round t = 0; t < horizon; ++t) {
    const double zeta = trace.zeta[static_cast<std::size_t>(t)];
    const double eta = trace.eta[static_cast<std::size_t>(t)];
    RoundOutput out = ctx.opts.backend == Backend::OpenMP
                          ? round_openmp(ctx, t, zeta, eta, trace.x.back(), trace.y.back())
                          : round_serial(ctx, t, zeta, eta, trace.x.back(), trace.y.back());
    trace.x.push_back(std::move(out.x_next));
    trace.y.push_back(std::move(out.y_next));
    trace.z.push_back(std::move(out.z));
    trace.primal_grad.push_back(std::move(out.grad));
    trace.dual_innovation.push_back(std::move(out.innovation));
  }
  return trace;
}

}  // namespace

RunTrace run_exact(const MepInstance& inst, const GraphSequence& seq, const StepSchedule& sched,
                   Round horizon, const Matrix& init, const EngineOptions& opts) {
  const RoundContext ctx{inst, seq, opts, Algorithm::Exact, nullptr, 0};
  return run(ctx, sched, horizon, init);
}

RunTrace run_stochastic(const MepInstance& inst, const GraphSequence& seq,
                        const StepSchedule& sched, Round horizon, const Matrix& init,
                        const NoiseModel& noise, std::uint64_t seed, const EngineOptions& opts) {
  if (sched.kind() != StepSchedule::Kind::Fixed)
    throw Error("the stochastic algorithm requires a fixed step schedule");
  if (noise.source == NoiseModel::Source::Native && noise.sigma1 > 0.0 && !inst.native_noise)
    throw Error("instance '" + inst.name + "' has no native noise model");
  const RoundContext ctx{inst, seq, opts, Algorithm::Stochastic, &noise, seed};
  return run(ctx, sched, horizon, init);
}

void write_trace_csv(const std::string& path, const RunTrace& trace) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot write " + path);
  const Index h = trace.y.front().cols();
  std::fputs("round,agent,coord,x", f);
  for (Index k = 1; k <= h; ++k) std::fprintf(f, ",y_%ld", static_cast<long>(k));
  std::fputs(",zeta,eta\n", f);
  for (std::size_t t = 0; t < trace.x.size(); ++t) {
    const Matrix& x = trace.x[t];
    const Matrix& y = trace.y[t];
    for (Index i = 0; i < x.rows(); ++i)
      for (Index c = 0; c < x.cols(); ++c) {
        std::fprintf(f, "%zu,%ld,%ld,%.17g", t, static_cast<long>(i), static_cast<long>(c),
                     x(i, c));
        for (Index k = 0; k < h; ++k) std::fprintf(f, ",%.17g", y(i, k));
        std::fprintf(f, ",%.17g,%.17g\n", trace.zeta[t], trace.eta[t]);
      }
  }
  std::fclose(f);
}

}  // namespace omep
