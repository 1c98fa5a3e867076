// Serial reference vs OpenMP kernels.
#include <cmath>

#include <benchmark/benchmark.h>

#include "omep/engine.hpp"
#include "omep/experiment.hpp"
#include "omep/geometry.hpp"
#include "omep/problem.hpp"

namespace {

// Large synthetic instance so per-agent work dominates: n agents on a ring,
// quadratic tracking costs on a box in R^m.
omep::MepInstance synthetic(int n, omep::Index m) {
  omep::SeparableFamily fam;
  fam.n = n;
  fam.m = m;
  fam.h = 1;
  fam.omega = omep::FeasibleSet::box(m, -1.0, 1.0);
  fam.psi = [](int i, omep::Round t, const omep::Vector& x) {
    return 0.5 * (x.array() - 0.1 * std::sin(0.01 * t + i)).square().sum();
  };
  fam.grad_psi = [](int i, omep::Round t, const omep::Vector& x) -> omep::Vector {
    return (x.array() - 0.1 * std::sin(0.01 * t + i)).matrix();
  };
  fam.g = [](int, omep::Round, const omep::Vector& x) -> omep::Vector {
    return omep::Vector::Constant(1, x.squaredNorm() - 0.5);
  };
  fam.jac_g = [](int, omep::Round, const omep::Vector& x) -> omep::Matrix { return 2.0 * x; };
  return omep::builtin_separable(std::move(fam));
}

omep::GraphSequence ring(int n) {
  std::vector<int> cycle(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) cycle[static_cast<std::size_t>(i)] = i;
  return omep::GraphSequence({omep::graphs::lazy_cycles(n, {cycle})}, 1);
}

void engine_rounds(benchmark::State& state, omep::Backend backend) {
  const int n = static_cast<int>(state.range(0));
  const auto inst = synthetic(n, 64);
  const auto seq = ring(n);
  const auto sched = omep::StepSchedule::time_varying(0.5, 1.0 / 3.0);
  omep::EngineOptions opts;
  opts.backend = backend;
  for (auto _ : state) {
    auto trace = omep::run_exact(inst, seq, sched, 50, {}, opts);
    benchmark::DoNotOptimize(trace.x.back().data());
  }
  state.SetItemsProcessed(state.iterations() * 50 * n);
}

void BM_EngineSerial(benchmark::State& s) { engine_rounds(s, omep::Backend::Serial); }
void BM_EngineOpenMP(benchmark::State& s) { engine_rounds(s, omep::Backend::OpenMP); }
BENCHMARK(BM_EngineSerial)->Arg(8)->Arg(64);
BENCHMARK(BM_EngineOpenMP)->Arg(8)->Arg(64);

void BM_Example2Stochastic(benchmark::State& state) {
  auto cfg = omep::default_config(2);
  cfg.parallel = state.range(0) != 0;
  const auto inst = omep::make_instance(cfg);
  const auto seq = omep::make_graph(cfg);
  const auto sched = omep::make_schedule(cfg);
  const auto noise = omep::NoiseModel::native(inst);
  const auto opts = omep::make_engine_options(cfg);
  for (auto _ : state) {
    auto trace = omep::run_stochastic(inst, seq, sched, cfg.horizon, *cfg.init, noise, 7, opts);
    benchmark::DoNotOptimize(trace.x.back().data());
  }
}
BENCHMARK(BM_Example2Stochastic)->Arg(0)->Arg(1);

void BM_EstimateBounds(benchmark::State& state) {
  const auto inst = omep::example2();
  omep::BoundEstimateOptions opts;
  opts.samples = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(omep::estimate_bounds(inst, opts).kappa1);
}
BENCHMARK(BM_EstimateBounds)->Arg(4000)->Arg(40000);

}  // namespace

BENCHMARK_MAIN();
