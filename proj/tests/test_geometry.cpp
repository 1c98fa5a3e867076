#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "omep/geometry.hpp"
#include "random_instances.hpp"

using namespace omep;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("divergence values") {
  const auto e = BregmanGeometry::euclidean();
  CHECK(e.divergence(vec({0.3, -1.0}), vec({0.3, -1.0})) == 0.0);
  CHECK(e.divergence(vec({1.0, 0.0}), vec({0.0, 0.0})) == doctest::Approx(1.0));
  CHECK(e.mu() == 2.0);
  CHECK(e.K() == 1.0);

  const auto kl = BregmanGeometry::kl();
  const double expect = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(kl.divergence(vec({0.5, 0.5}), vec({0.25, 0.75})) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(expect == doctest::Approx(0.14384).epsilon(1e-4));
  CHECK_THROWS_AS(kl.divergence(vec({1.0, 0.0}), vec({0.5, 0.5})), Error);
  CHECK_THROWS_AS(kl.check_domain(vec({-0.1, 1.1})), Error);

  Matrix P(2, 2);
  P << 2.0, 0.0, 0.0, 0.5;
  const auto mh = BregmanGeometry::mahalanobis(P);
  CHECK(mh.divergence(vec({1.0, 1.0}), vec({0.0, 0.0})) == doctest::Approx(0.5 + 2.0));
}

TEST_CASE("mahalanobis validation") {
  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(BregmanGeometry::mahalanobis(asym), Error);
  Matrix indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(BregmanGeometry::mahalanobis(indefinite), Error);
  Matrix illcond(2, 2);
  illcond << 1.0, 0.0, 0.0, 1e-13;
  CHECK_THROWS_AS(BregmanGeometry::mahalanobis(illcond), Error);
}

TEST_CASE("divergence sandwich bounds on random pairs") {
  std::mt19937_64 rng(11);
  const auto box = FeasibleSet::box(3, -2.0, 2.0);
  const auto simplex = FeasibleSet::simplex(4, 1e-3);
  const std::vector<std::pair<BregmanGeometry, FeasibleSet>> cases{
      {BregmanGeometry::euclidean(), box},
      {BregmanGeometry::mahalanobis(testing::random_spd(3, rng)), box},
      {BregmanGeometry::kl(1e-3), simplex}};
  for (const auto& [g, set] : cases) {
    int bad = 0;
    for (int k = 0; k < 10000; ++k) {
      const Vector x = set.sample(rng), y = set.sample(rng);
      const double d = g.divergence(x, y), sq = (x - y).squaredNorm();
      if (d < 0.5 * g.mu() * sq - 1e-12 || d > g.K() * sq + 1e-12) ++bad;
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("grad phi matches central differences") {
  std::mt19937_64 rng(5);
  const auto simplex = FeasibleSet::simplex(3, 0.05);
  const auto box = FeasibleSet::box(3, -2.0, 2.0);
  const std::vector<std::pair<BregmanGeometry, FeasibleSet>> cases{
      {BregmanGeometry::euclidean(), box},
      {BregmanGeometry::mahalanobis(testing::random_spd(3, rng)), box},
      {BregmanGeometry::kl(1e-3), simplex}};
  for (const auto& [g, set] : cases) {
    for (int k = 0; k < 50; ++k) {
      const Vector x = set.sample(rng);
      const Vector grad = g.grad_phi(x);
      for (Index c = 0; c < x.size(); ++c) {
        const double h = 1e-6;
        Vector xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        const double fd = (g.phi(xp) - g.phi(xm)) / (2 * h);
        CHECK(std::abs(fd - grad[c]) <= 1e-6 * std::max(1.0, std::abs(grad[c])));
      }
    }
  }
}

TEST_CASE("projections") {
  const auto box = FeasibleSet::box(5, 0.0, 30.0);
  CHECK(box.project(vec({-5, 10, 40, 0, 30})) == vec({0, 10, 30, 0, 30}));
  const auto ball = FeasibleSet::ball(Vector::Zero(2), 2.0);
  CHECK(ball.project(vec({3, 4})).isApprox(vec({1.2, 1.6}), 1e-15));
  const auto simplex = FeasibleSet::simplex(2);
  CHECK(simplex.project(vec({0.6, 0.6})).isApprox(vec({0.5, 0.5}), 1e-15));

  // Idempotence and fixed points on random inputs.
  std::mt19937_64 rng(2);
  for (int k = 0; k < 200; ++k) {
    const auto c = testing::random_mirror_case(k, rng);
    const Vector v = testing::normal_vector(c.set.dim(), 3.0, rng);
    const Vector p = c.set.project(v);
    CHECK(c.set.contains(p, 1e-10));
    CHECK((c.set.project(p) - p).norm() < 1e-12);
    CHECK((c.set.project(c.z) - c.z).norm() < 1e-12);
  }
}

TEST_CASE("simplex projection agrees with a brute-force quadratic program") {
  // 2-d simplex is the segment {(u, 1-u)}, minimize over u on a fine grid.
  std::mt19937_64 rng(8);
  const auto simplex = FeasibleSet::simplex(2, 0.1);
  for (int k = 0; k < 50; ++k) {
    const Vector v = testing::normal_vector(2, 1.0, rng);
    double best = 1e300, bu = 0.0;
    for (int j = 0; j <= 800000; ++j) {
      const double u = 0.1 + 0.8 * j / 800000.0;
      const double d = std::pow(v[0] - u, 2) + std::pow(v[1] - 1 + u, 2);
      if (d < best) best = d, bu = u;
    }
    CHECK(simplex.project(v)[0] == doctest::Approx(bu).epsilon(1e-5));
  }
}

TEST_CASE("set validation and radius") {
  CHECK_THROWS_AS(FeasibleSet::box(vec({1.0}), vec({0.0})), Error);
  CHECK_THROWS_AS(FeasibleSet::simplex(4, 0.3), Error);
  CHECK_THROWS_AS(FeasibleSet::ball(Vector::Zero(2), -1.0), Error);
  CHECK(FeasibleSet::box(1, -2.0, 2.0).radius() == 2.0);
  CHECK(FeasibleSet::ball(vec({3, 4}), 1.0).radius() == doctest::Approx(6.0));
  CHECK(FeasibleSet::simplex(3).radius() == doctest::Approx(1.0));
}

TEST_CASE("mirror argmin closed forms") {
  const auto e = BregmanGeometry::euclidean();
  const auto box = FeasibleSet::box(3, -1.0, 1.0);
  const Vector z = vec({0.2, -0.7, 0.9});
  CHECK(mirror_argmin(e, box, z, Vector::Zero(3)) == z);

  const auto seg = FeasibleSet::box(1, -2.0, 2.0);
  const Vector x = mirror_argmin(e, seg, Vector::Zero(1), Vector::Constant(1, 2.0));
  CHECK(x[0] == doctest::Approx(-1.0).epsilon(1e-15));
  // Grid search at 1e-4 over [-2, 2].
  double best = 1e300, arg = 0.0;
  for (int j = 0; j <= 40000; ++j) {
    const double u = -2.0 + j * 1e-4;
    const double obj = u * u + 2.0 * u;
    if (obj < best) best = obj, arg = u;
  }
  CHECK(std::abs(arg - x[0]) <= 1e-4);

  const auto kl = BregmanGeometry::kl();
  const auto simplex = FeasibleSet::simplex(4, 1e-6);
  const Vector uniform = Vector::Constant(4, 0.25);
  CHECK(mirror_argmin(kl, simplex, uniform, Vector::Constant(4, 3.7)).isApprox(uniform, 1e-14));
  CHECK_THROWS_AS(mirror_argmin(kl, FeasibleSet::simplex(4, 0.0), uniform, Vector::Zero(4)), Error);
  CHECK_THROWS_AS(mirror_argmin(kl, box, z, Vector::Zero(3)), Error);
}

TEST_CASE("mirror argmin satisfies the three-point inequality") {
  std::mt19937_64 rng(21);
  int worst_case = -1;
  double worst = -1e300;
  for (int k = 0; k < 300; ++k) {
    const auto c = testing::random_mirror_case(k, rng);
    const Vector xhat = mirror_argmin(c.geom, c.set, c.z, c.s);
    CHECK(c.set.contains(xhat, 1e-9));
    for (int p = 0; p < 100; ++p) {
      const double gap = three_point_gap(c.geom, c.z, c.s, xhat, c.set.sample(rng));
      if (gap > worst) worst = gap, worst_case = k;
    }
  }
  INFO("worst case " << worst_case);
  CHECK(worst <= 1e-8);
}

TEST_CASE("iterative solver agrees with the closed forms") {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 140; ++k) {
    const auto c = testing::random_mirror_case(k, rng);
    if (c.geom.kind() == BregmanGeometry::Kind::Mahalanobis) continue;
    const Vector closed = mirror_argmin(c.geom, c.set, c.z, c.s);
    const Vector iter = mirror_argmin_iterative(c.geom, c.set, c.z, c.s);
    const double tol = c.geom.kind() == BregmanGeometry::Kind::KL ? 1e-7 : 1e-8;
    CHECK((closed - iter).cwiseAbs().maxCoeff() <= tol);
  }
}

TEST_CASE("iteration cap raises with the residual") {
  std::mt19937_64 rng(9);
  const auto g = BregmanGeometry::mahalanobis(testing::random_spd(3, rng));
  const auto box = FeasibleSet::box(3, -1.0, 1.0);
  InnerSolverOptions opts;
  opts.max_iterations = 1;
  try {
    mirror_argmin(g, box, Vector::Zero(3), testing::normal_vector(3, 0.3, rng), opts);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > 0.0);
  }
}

TEST_CASE("divergence lipschitz estimate") {
  const double ell =
      estimate_divergence_lipschitz(BregmanGeometry::euclidean(), FeasibleSet::box(1, -2, 2), 2000, 1);
  CHECK(ell == doctest::Approx(8.0));
}

TEST_CASE("json descriptors") {
  const auto set = FeasibleSet::product({FeasibleSet::box(2, 0.0, 1.0), FeasibleSet::ball(vec({1, 2}), 3.0),
                                         FeasibleSet::simplex(3, 0.1)});
  const auto back = feasible_set_from_json(feasible_set_to_json(set));
  CHECK(back.dim() == set.dim());
  const Vector v = vec({-1, 2, 9, 9, 0.2, 0.2, 5});
  CHECK(back.project(v).isApprox(set.project(v)));
  const auto g = geometry_from_json(geometry_to_json(BregmanGeometry::kl(1e-4)));
  CHECK(g.kind() == BregmanGeometry::Kind::KL);
  CHECK(g.kl_floor() == 1e-4);
  CHECK_THROWS(feasible_set_from_json(nlohmann::json{{"type", "torus"}}));
}

}  // TEST_SUITE
