#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "omep/engine.hpp"
#include "omep/experiment.hpp"
#include "random_instances.hpp"

using namespace omep;

namespace {

MepInstance zero_instance(int n, Index m) {
  SeparableFamily fam;
  fam.n = n;
  fam.m = m;
  fam.h = 1;
  fam.omega = FeasibleSet::box(m, -5.0, 5.0);
  fam.psi = [](int, Round, const Vector&) { return 0.0; };
  fam.grad_psi = [m](int, Round, const Vector&) -> Vector { return Vector::Zero(m); };
  fam.g = [](int, Round, const Vector&) -> Vector { return Vector::Constant(1, -1.0); };
  fam.jac_g = [m](int, Round, const Vector&) -> Matrix { return Matrix::Zero(m, 1); };
  return builtin_separable(std::move(fam));
}

Matrix example1_init() { return *default_config(1).init; }

void check_identical(const RunTrace& a, const RunTrace& b) {
  REQUIRE(a.x.size() == b.x.size());
  for (std::size_t t = 0; t < a.x.size(); ++t) {
    CHECK(a.x[t] == b.x[t]);
    CHECK(a.y[t] == b.y[t]);
  }
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("schedules") {
  CHECK_THROWS_AS(StepSchedule::time_varying(0.4, 0.4), Error);
  CHECK_THROWS_AS(StepSchedule::time_varying(0.7, 0.3), Error);  // a >= 2b
  CHECK_THROWS_AS(StepSchedule::time_varying(1.0, 0.6), Error);
  CHECK_THROWS_AS(StepSchedule::time_varying(0.5, 1.0 / 3.0, 1.0, 0.5), Error);

  const auto tv = StepSchedule::time_varying(0.5, 1.0 / 3.0);
  CHECK(tv.zeta(0) == 1.0);
  CHECK(tv.eta(3) == doctest::Approx(std::pow(4.0, -1.0 / 3.0)));
  for (Round t = 0; t < 500; ++t) {
    CHECK(tv.zeta(t) <= tv.eta(t));
    CHECK(tv.zeta(t + 1) <= tv.zeta(t));
    CHECK(tv.eta(t + 1) <= tv.eta(t));
    CHECK(tv.eta(t) <= 1.0);
  }
  const auto stock = StepSchedule::time_varying(0.5, 1.0 / 3.0, 20.0, 8.0);
  CHECK(stock.zeta(2) == doctest::Approx(1.0 / std::sqrt(48.0)));

  const auto fx = StepSchedule::fixed(0.5, 1.0 / 3.0, 100, 30.0);
  CHECK(fx.zeta(0) == fx.zeta(99));
  CHECK(fx.zeta(0) == doctest::Approx(std::pow(130.0, -0.5)));
  CHECK(fx.with_horizon(200).eta(0) == doctest::Approx(std::pow(230.0, -1.0 / 3.0)));
  CHECK(StepSchedule::fixed(0.5, 1.0 / 3.0, 9).zeta(0) == doctest::Approx(std::pow(10.0, -0.5)));

  const auto back = schedule_from_json(schedule_to_json(stock), 0);
  CHECK(back.zeta(17) == stock.zeta(17));
}

TEST_CASE("primal step") {
  const auto e = BregmanGeometry::euclidean();
  const auto box = FeasibleSet::box(2, -1.0, 1.0);
  Vector z(2);
  z << 0.3, -0.4;
  CHECK(primal_step(e, box, z, Vector::Zero(2), Matrix::Zero(2, 1), Vector::Zero(1), 0.1, 0.2) == z);

  const auto seg = FeasibleSet::box(1, -2.0, 2.0);
  // zeta * grad + eta * jac * y = 0.5 * 2 + 0.5 * (1 * 2) = 2.
  const Vector x = primal_step(e, seg, Vector::Zero(1), Vector::Constant(1, 2.0),
                               Matrix::Constant(1, 1, 1.0), Vector::Constant(1, 2.0), 0.5, 0.5);
  CHECK(x[0] == doctest::Approx(-1.0));

  CHECK_THROWS_AS(primal_step(e, seg, Vector::Zero(1), Vector::Zero(1), Matrix::Zero(1, 1),
                              Vector::Zero(1), 0.6, 0.5),
                  Error);
  CHECK_THROWS_AS(primal_step(e, seg, Vector::Zero(1), Vector::Zero(1), Matrix::Zero(1, 1),
                              Vector::Constant(1, -1.0), 0.1, 0.5),
                  Error);
}

TEST_CASE("dual step") {
  const GraphSequence seq = graphs::example1();
  CHECK(dual_step(seq, 0, Matrix::Zero(6, 2), -Matrix::Ones(6, 2), 0.3).isZero());
  std::mt19937_64 rng(1);
  const Matrix g = testing::normal_vector(12, 1.0, rng).reshaped(6, 2);
  CHECK(dual_step(seq, 2, Matrix::Ones(6, 2), g, 1.0) == g.cwiseMax(0.0));

  Matrix A(2, 2);
  A << 0.5, 0.5, 0.5, 0.5;
  const GraphSequence two({WeightedDigraph(A)}, 1);
  Matrix y(2, 1);
  y << 1.0, 3.0;
  const Matrix out = dual_step(two, 0, y, Matrix::Zero(2, 1), 0.5);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(1, 0) == 1.0);
  CHECK_THROWS_AS(dual_step(two, 0, y, Matrix::Zero(2, 1), 0.0), Error);
}

TEST_CASE("horizon zero keeps only initial states") {
  const auto sched = StepSchedule::time_varying(0.5, 1.0 / 3.0);
  const RunTrace tr = run_exact(example1(), graphs::example1(), sched, 0, example1_init());
  CHECK(tr.horizon() == 0);
  CHECK(tr.x.size() == 1);
  CHECK(tr.z.empty());
  CHECK(tr.x[0] == example1_init());
  CHECK(tr.y[0].isZero());
}

TEST_CASE("zero oracles reduce to average consensus") {
  const MepInstance inst = zero_instance(6, 2);
  Matrix init = Matrix::Zero(6, 2);
  for (int i = 0; i < 6; ++i) init.row(i) << i - 2.5, 0.5 * i;
  const Vector mean = init.colwise().mean().transpose();
  const RunTrace tr =
      run_exact(inst, graphs::example1(), StepSchedule::time_varying(0.5, 1.0 / 3.0), 400, init);
  for (const auto& x : tr.x)
    CHECK((x.colwise().mean().transpose() - mean).norm() < 1e-12);
  CHECK((tr.x.back().rowwise() - mean.transpose()).rowwise().norm().maxCoeff() < 1e-8);
  for (const auto& y : tr.y) CHECK(y.isZero());
}

TEST_CASE("default initial states are the set center") {
  const MepInstance inst = example2();
  const RunTrace tr = run_exact(inst, graphs::example2(), StepSchedule::time_varying(0.5, 0.4), 1);
  CHECK(tr.x[0] == Matrix::Constant(5, 5, 15.0));
}

TEST_CASE("input validation") {
  const auto sched = StepSchedule::time_varying(0.5, 1.0 / 3.0);
  CHECK_THROWS_AS(run_exact(example1(), graphs::example2(), sched, 5), Error);
  Matrix outside = example1_init();
  outside(2, 0) = 2.5;
  CHECK_THROWS_AS(run_exact(example1(), graphs::example1(), sched, 5, outside), Error);
  CHECK_THROWS_AS(run_exact(example1(), graphs::example1(), sched, 5, Matrix::Zero(6, 2)), Error);
  CHECK_THROWS_AS(run_stochastic(example1(), graphs::example1(), sched, 5, example1_init(),
                                 NoiseModel::isotropic(0.1, 0.1), 1),
                  Error);

  MepInstance broken = example1();
  broken.grad2_f = [](int i, Round t, const Vector&, const Vector&) -> Vector {
    return Vector::Constant(1, (i == 3 && t == 2) ? std::nan("") : 0.0);
  };
  for (Backend backend : {Backend::Serial, Backend::OpenMP}) {
    EngineOptions opts;
    opts.backend = backend;
    try {
      run_exact(broken, graphs::example1(), sched, 5, example1_init(), opts);
      FAIL("expected an error");
    } catch (const Error& e) {
      const std::string what = e.what();
      CHECK(what.find("agent 3") != std::string::npos);
      CHECK(what.find("round 2") != std::string::npos);
    }
  }
}

TEST_CASE("openmp backend matches the serial reference bit for bit") {
  std::mt19937_64 rng(31);
  const MepInstance synth = testing::random_separable(rng);
  const GraphSequence seq = testing::random_connected_sequence(synth.n, 2, rng);
  const auto tv = StepSchedule::time_varying(0.5, 1.0 / 3.0);
  EngineOptions serial, par1, par4;
  par1.backend = par4.backend = Backend::OpenMP;
  par1.threads = 1;
  par4.threads = 4;
  const RunTrace ref = run_exact(synth, seq, tv, 200, {}, serial);
  check_identical(ref, run_exact(synth, seq, tv, 200, {}, par1));
  check_identical(ref, run_exact(synth, seq, tv, 200, {}, par4));

  auto cfg = default_config(2);
  const MepInstance ex2 = make_instance(cfg);
  const auto fx = make_schedule(cfg);
  const auto noise = NoiseModel::native(ex2, 0.3);
  const RunTrace s_ref = run_stochastic(ex2, graphs::example2(), fx, 100, *cfg.init, noise, 7, serial);
  check_identical(s_ref, run_stochastic(ex2, graphs::example2(), fx, 100, *cfg.init, noise, 7, par4));
  check_identical(s_ref, run_stochastic(ex2, graphs::example2(), fx, 100, *cfg.init, noise, 7, serial));
  const RunTrace other = run_stochastic(ex2, graphs::example2(), fx, 100, *cfg.init, noise, 8, serial);
  CHECK(other.x.back() != s_ref.x.back());
}

TEST_CASE("stochastic dual uses exact constraint values") {
  auto cfg = default_config(2);
  const MepInstance inst = make_instance(cfg);
  const RunTrace tr = run_stochastic(inst, graphs::example2(), make_schedule(cfg), 20, *cfg.init,
                                     NoiseModel::isotropic(5.0, 5.0), 3);
  for (std::size_t t = 0; t < tr.dual_innovation.size(); ++t)
    for (int i = 0; i < 5; ++i)
      CHECK(tr.dual_innovation[t](i, 0) == inst.g(i, static_cast<Round>(t), tr.x[t].row(i).transpose())[0]);
}

TEST_CASE("example 1 round 0 step bound") {
  const MepInstance inst = example1();
  const BoundConstants b = estimate_bounds(inst);
  const auto sched = StepSchedule::time_varying(0.5, 1.0 / 3.0, 20.0, 8.0);
  const RunTrace tr = run_exact(inst, graphs::example1(), sched, 1, example1_init());
  const double bound = (std::sqrt(6.0) * b.kappa2 * b.kappa3 + b.kappa1) / 2.0 * tr.eta[0];
  const double step = (tr.x[1] - tr.z[0]).rowwise().norm().maxCoeff();
  CHECK(step > 0.0);
  CHECK(step <= bound);
}

TEST_CASE("trace csv") {
  const auto dir = testing::scratch_dir("trace");
  auto cfg = default_config(2);
  const RunTrace tr = run_exact(make_instance(cfg), graphs::example2(), make_schedule(cfg), 3, *cfg.init);
  const std::string file = (dir / "trace.csv").string();
  write_trace_csv(file, tr);
  const std::string text = testing::slurp(file);
  CHECK(text.rfind("round,agent,coord,x,y_1,zeta,eta\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 4 * 5 * 5);
}

}  // TEST_SUITE
