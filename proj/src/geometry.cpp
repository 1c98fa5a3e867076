#include "omep/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <nlohmann/json.hpp>

namespace omep {

// ---------------------------------------------------------------- sets

FeasibleSet FeasibleSet::box(Vector lower, Vector upper) {
  if (lower.size() != upper.size() || lower.size() == 0)
    throw Error("box bounds must be non-empty and of equal length");
  for (Index k = 0; k < lower.size(); ++k)
    if (!std::isfinite(lower[k]) || !std::isfinite(upper[k]) || lower[k] > upper[k])
      throw Error("box needs finite lower <= upper in coordinate " + std::to_string(k));
  FeasibleSet s(Kind::Box, lower.size());
  s.a_ = std::move(lower);
  s.b_ = std::move(upper);
  return s;
}

FeasibleSet FeasibleSet::box(Index dim, double lower, double upper) {
  return box(Vector::Constant(dim, lower), Vector::Constant(dim, upper));
}

FeasibleSet FeasibleSet::ball(Vector center, double radius) {
  if (center.size() == 0 || !(radius > 0.0) || !std::isfinite(radius))
    throw Error("ball needs a non-empty center and a finite positive radius");
  FeasibleSet s(Kind::Ball, center.size());
  s.a_ = std::move(center);
  s.r_ = radius;
  return s;
}

FeasibleSet FeasibleSet::simplex(Index dim, double floor) {
  if (dim < 1) throw Error("simplex dimension must be >= 1");
  if (floor < 0.0 || floor * static_cast<double>(dim) > 1.0)
    throw Error("simplex floor must satisfy 0 <= floor*m <= 1");
  FeasibleSet s(Kind::Simplex, dim);
  s.r_ = floor;
  return s;
}

FeasibleSet FeasibleSet::product(std::vector<FeasibleSet> blocks) {
  if (blocks.empty()) throw Error("product set needs at least one block");
  Index dim = 0;
  for (const auto& b : blocks) dim += b.dim();
  FeasibleSet s(Kind::Product, dim);
  s.blocks_ = std::move(blocks);
  return s;
}

double FeasibleSet::radius() const {
  switch (kind_) {
    case Kind::Box:
      return a_.cwiseAbs().cwiseMax(b_.cwiseAbs()).norm();
    case Kind::Ball:
      return a_.norm() + r_;
    case Kind::Simplex: {
      const double rest = static_cast<double>(dim_ - 1);
      const double peak = 1.0 - rest * r_;
      return std::sqrt(peak * peak + rest * r_ * r_);
    }
    case Kind::Product: {
      double sq = 0.0;
      for (const auto& b : blocks_) sq += b.radius() * b.radius();
      return std::sqrt(sq);
    }
  }
  return 0.0;
}

Vector project_scaled_simplex(const Vector& v, double total) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - total) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

Vector FeasibleSet::project(const Vector& v) const {
  if (v.size() != dim_) throw Error("projection: dimension mismatch");
  switch (kind_) {
    case Kind::Box:
      return v.cwiseMax(a_).cwiseMin(b_);
    case Kind::Ball: {
      const Vector d = v - a_;
      const double norm = d.norm();
      if (norm <= r_) return v;
      return a_ + d * (r_ / norm);
    }
    case Kind::Simplex: {
      const double m = static_cast<double>(dim_);
      Vector shifted = v.array() - r_;
      return (project_scaled_simplex(shifted, 1.0 - m * r_).array() + r_).matrix();
    }
    case Kind::Product: {
      Vector out(dim_);
      Index off = 0;
      for (const auto& b : blocks_) {
        out.segment(off, b.dim()) = b.project(v.segment(off, b.dim()));
        off += b.dim();
      }
      return out;
    }
  }
  return v;
}

bool FeasibleSet::contains(const Vector& v, double tol) const {
  if (v.size() != dim_ || !v.allFinite()) return false;
  switch (kind_) {
    case Kind::Box:
      return ((v - a_).array() >= -tol).all() && ((b_ - v).array() >= -tol).all();
    case Kind::Ball:
      return (v - a_).norm() <= r_ + tol;
    case Kind::Simplex:
      return std::abs(v.sum() - 1.0) <= tol * static_cast<double>(dim_) &&
             (v.array() >= r_ - tol).all();
    case Kind::Product: {
      Index off = 0;
      for (const auto& b : blocks_) {
        if (!b.contains(v.segment(off, b.dim()), tol)) return false;
        off += b.dim();
      }
      return true;
    }
  }
  return false;
}

Vector FeasibleSet::center() const {
  switch (kind_) {
    case Kind::Box:
      return 0.5 * (a_ + b_);
    case Kind::Ball:
      return a_;
    case Kind::Simplex:
      return Vector::Constant(dim_, 1.0 / static_cast<double>(dim_));
    case Kind::Product: {
      Vector out(dim_);
      Index off = 0;
      for (const auto& b : blocks_) {
        out.segment(off, b.dim()) = b.center();
        off += b.dim();
      }
      return out;
    }
  }
  return Vector::Zero(dim_);
}

Vector FeasibleSet::sample(std::mt19937_64& rng) const {
  switch (kind_) {
    case Kind::Box: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      Vector out(dim_);
      for (Index k = 0; k < dim_; ++k) out[k] = a_[k] + u(rng) * (b_[k] - a_[k]);
      return out;
    }
    case Kind::Ball: {
      std::normal_distribution<double> g(0.0, 1.0);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      Vector dir(dim_);
      for (Index k = 0; k < dim_; ++k) dir[k] = g(rng);
      const double n = dir.norm();
      if (n == 0.0) return a_;
      const double rad = r_ * std::pow(u(rng), 1.0 / static_cast<double>(dim_));
      return a_ + dir * (rad / n);
    }
    case Kind::Simplex: {
      std::exponential_distribution<double> e(1.0);
      Vector w(dim_);
      for (Index k = 0; k < dim_; ++k) w[k] = e(rng);
      w /= w.sum();
      const double m = static_cast<double>(dim_);
      return (r_ + (1.0 - m * r_) * w.array()).matrix();
    }
    case Kind::Product: {
      Vector out(dim_);
      Index off = 0;
      for (const auto& b : blocks_) {
        out.segment(off, b.dim()) = b.sample(rng);
        off += b.dim();
      }
      return out;
    }
  }
  return center();
}

std::vector<Vector> FeasibleSet::extreme_points() const {
  std::vector<Vector> pts;
  switch (kind_) {
    case Kind::Box: {
      if (dim_ <= 10) {
        const std::uint64_t count = std::uint64_t{1} << dim_;
        for (std::uint64_t mask = 0; mask < count; ++mask) {
          Vector p(dim_);
          for (Index k = 0; k < dim_; ++k) p[k] = (mask >> k) & 1U ? b_[k] : a_[k];
          pts.push_back(std::move(p));
        }
      } else {
        pts.push_back(a_);
        pts.push_back(b_);
      }
      break;
    }
    case Kind::Ball:
      for (Index k = 0; k < dim_; ++k) {
        Vector p = a_;
        p[k] += r_;
        pts.push_back(p);
        p[k] -= 2 * r_;
        pts.push_back(std::move(p));
      }
      break;
    case Kind::Simplex: {
      const double peak = 1.0 - static_cast<double>(dim_ - 1) * r_;
      for (Index k = 0; k < dim_; ++k) {
        Vector p = Vector::Constant(dim_, r_);
        p[k] = peak;
        pts.push_back(std::move(p));
      }
      break;
    }
    case Kind::Product: {
      const Vector mid = center();
      Index off = 0;
      for (const auto& b : blocks_) {
        for (const auto& e : b.extreme_points()) {
          Vector p = mid;
          p.segment(off, b.dim()) = e;
          pts.push_back(std::move(p));
        }
        off += b.dim();
      }
      break;
    }
  }
  pts.push_back(center());
  return pts;
}

// ---------------------------------------------------------------- Bregman

BregmanGeometry BregmanGeometry::euclidean() { return BregmanGeometry(Kind::Euclidean); }

BregmanGeometry BregmanGeometry::mahalanobis(const Matrix& P) {
  if (P.rows() != P.cols() || P.rows() == 0) throw Error("Mahalanobis P must be square");
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * P.cwiseAbs().maxCoeff())
    throw Error("Mahalanobis P must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(P);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) throw Error("Mahalanobis P must be positive definite");
  if (hi / lo > 1e12) throw Error("Mahalanobis P condition number exceeds 1e12");
  BregmanGeometry g(Kind::Mahalanobis);
  g.metric_ = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
              eig.eigenvectors().transpose();
  g.metric_ = 0.5 * (g.metric_ + g.metric_.transpose()).eval();
  g.mu_ = 2.0 / hi;
  g.K_ = 1.0 / lo;
  return g;
}

BregmanGeometry BregmanGeometry::kl(double floor) {
  if (!(floor > 0.0) || floor >= 1.0) throw Error("KL floor must lie in (0, 1)");
  BregmanGeometry g(Kind::KL);
  g.floor_ = floor;
  // Pinsker: KL >= (1/2)||x-y||_1^2 >= (1/2)||x-y||_2^2.
  g.mu_ = 1.0;
  g.K_ = 1.0 / floor;
  return g;
}

void BregmanGeometry::check_domain(const Vector& x) const {
  if (!x.allFinite()) throw Error("non-finite point passed to Bregman geometry");
  if (kind_ == Kind::KL && (x.array() <= 0.0).any())
    throw Error("KL divergence requires strictly positive coordinates");
  if (kind_ == Kind::Mahalanobis && x.size() != metric_.rows())
    throw Error("Mahalanobis dimension mismatch");
}

double BregmanGeometry::phi(const Vector& x) const {
  check_domain(x);
  switch (kind_) {
    case Kind::Euclidean:
      return x.squaredNorm();
    case Kind::Mahalanobis:
      return x.dot(metric_ * x);
    case Kind::KL:
      return (x.array() * x.array().log() - x.array()).sum();
  }
  return 0.0;
}

Vector BregmanGeometry::grad_phi(const Vector& x) const {
  check_domain(x);
  switch (kind_) {
    case Kind::Euclidean:
      return 2.0 * x;
    case Kind::Mahalanobis:
      return 2.0 * (metric_ * x);
    case Kind::KL:
      return x.array().log().matrix();
  }
  return x;
}

double BregmanGeometry::divergence(const Vector& x, const Vector& y) const {
  if (x.size() != y.size()) throw Error("divergence: dimension mismatch");
  check_domain(x);
  check_domain(y);
  switch (kind_) {
    case Kind::Euclidean:
      return (x - y).squaredNorm();
    case Kind::Mahalanobis: {
      const Vector d = x - y;
      return d.dot(metric_ * d);
    }
    case Kind::KL:
      return (x.array() * (x.array().log() - y.array().log())).sum();
  }
  return 0.0;
}

// ---------------------------------------------------------------- argmin

namespace {

void require_compatible(const BregmanGeometry& geom, const FeasibleSet& set,
                        const Vector& z, const Vector& s) {
  if (z.size() != set.dim() || s.size() != set.dim())
    throw Error("mirror step: dimension mismatch");
  if (!s.allFinite()) throw Error("mirror step: non-finite tilt vector");
  geom.check_domain(z);
  if (geom.kind() == BregmanGeometry::Kind::KL &&
      (set.kind() != FeasibleSet::Kind::Simplex || set.simplex_floor() < geom.kl_floor()))
    throw Error("KL geometry requires a simplex whose floor is at least the KL floor");
}

// x_i = max(floor, c * w_i) with sum x = 1; w_i proportional to z_i exp(-s_i).
Vector kl_simplex_argmin(const Vector& z, const Vector& s, double floor) {
  const Index m = z.size();
  Vector logw = z.array().log() - s.array();
  logw.array() -= logw.maxCoeff();
  const Vector w = logw.array().exp();
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return w[a] > w[b]; });
  double top = 0.0;
  double scale = 0.0;
  for (Index k = 1; k <= m; ++k) {
    top += w[order[static_cast<std::size_t>(k - 1)]];
    scale = (1.0 - static_cast<double>(m - k) * floor) / top;
    const bool kth_free = scale * w[order[static_cast<std::size_t>(k - 1)]] >= floor;
    const bool next_clamped =
        k == m || scale * w[order[static_cast<std::size_t>(k)]] <= floor;
    if (kth_free && next_clamped) break;
  }
  return (scale * w.array()).cwiseMax(floor).matrix();
}

// Lipschitz constant of grad_x D(x, z) on the set.
double inner_lipschitz(const BregmanGeometry& geom, const FeasibleSet& set) {
  switch (geom.kind()) {
    case BregmanGeometry::Kind::Euclidean:
      return 2.0;
    case BregmanGeometry::Kind::Mahalanobis:
      return 2.0 * geom.K();
    case BregmanGeometry::Kind::KL:
      return 1.0 / std::max(set.simplex_floor(), geom.kl_floor());
  }
  return 1.0;
}

}  // namespace

Vector mirror_argmin_iterative(const BregmanGeometry& geom, const FeasibleSet& set,
                               const Vector& z, const Vector& s,
                               const InnerSolverOptions& opts) {
  require_compatible(geom, set, z, s);
  const double L = inner_lipschitz(geom, set);
  const double mu = geom.mu();
  const double beta = (std::sqrt(L) - std::sqrt(mu)) / (std::sqrt(L) + std::sqrt(mu));
  const Vector grad_z = geom.grad_phi(z);
  auto grad = [&](const Vector& x) -> Vector { return geom.grad_phi(x) - grad_z + s; };

  Vector x = set.project(z);
  Vector prev = x;
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iterations; ++it) {
    const Vector y = set.project(x + beta * (x - prev));
    prev = x;
    x = set.project(y - grad(y) / L);
    residual = L * (x - set.project(x - grad(x) / L)).norm();
    if (residual < opts.tolerance) return x;
  }
  throw ConvergenceError("mirror step inner solver hit its iteration cap", residual);
}

Vector mirror_argmin(const BregmanGeometry& geom, const FeasibleSet& set, const Vector& z,
                     const Vector& s, const InnerSolverOptions& opts) {
  require_compatible(geom, set, z, s);
  switch (geom.kind()) {
    case BregmanGeometry::Kind::Euclidean:
      return set.project(z - 0.5 * s);
    case BregmanGeometry::Kind::KL:
      return kl_simplex_argmin(z, s, set.simplex_floor());
    case BregmanGeometry::Kind::Mahalanobis:
      break;
  }
  return mirror_argmin_iterative(geom, set, z, s, opts);
}

double three_point_gap(const BregmanGeometry& geom, const Vector& z, const Vector& s,
                       const Vector& xhat, const Vector& w) {
  return s.dot(xhat - w) -
         (geom.divergence(w, z) - geom.divergence(w, xhat) - geom.divergence(xhat, z));
}

double estimate_divergence_lipschitz(const BregmanGeometry& geom, const FeasibleSet& set,
                                     int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double sup = 0.0;
  auto visit = [&](const Vector& x) {
    if (geom.kind() == BregmanGeometry::Kind::KL && (x.array() <= 0.0).any()) return;
    sup = std::max(sup, geom.grad_phi(x).norm());
  };
  for (const auto& p : set.extreme_points()) visit(p);
  for (int k = 0; k < samples; ++k) visit(set.sample(rng));
  return 2.0 * sup;
}

// ---------------------------------------------------------------- JSON

namespace {

Vector to_vector(const nlohmann::json& j, Index dim_hint) {
  if (j.is_number()) return Vector::Constant(dim_hint, j.get<double>());
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

FeasibleSet feasible_set_from_json(const nlohmann::json& doc) {
  const auto type = doc.at("type").get<std::string>();
  if (type == "box") {
    const Index dim = doc.value("dim", Index{1});
    return FeasibleSet::box(to_vector(doc.at("lower"), dim), to_vector(doc.at("upper"), dim));
  }
  if (type == "ball") {
    const Index dim = doc.value("dim", Index{1});
    return FeasibleSet::ball(to_vector(doc.at("center"), dim), doc.at("radius").get<double>());
  }
  if (type == "simplex")
    return FeasibleSet::simplex(doc.at("dim").get<Index>(), doc.value("floor", 0.0));
  if (type == "product") {
    std::vector<FeasibleSet> blocks;
    for (const auto& b : doc.at("blocks")) blocks.push_back(feasible_set_from_json(b));
    return FeasibleSet::product(std::move(blocks));
  }
  throw Error("unknown feasible set type '" + type + "'");
}

nlohmann::json feasible_set_to_json(const FeasibleSet& set) {
  switch (set.kind()) {
    case FeasibleSet::Kind::Box:
      return {{"type", "box"}, {"lower", to_std(set.lower())}, {"upper", to_std(set.upper())}};
    case FeasibleSet::Kind::Ball:
      return {{"type", "ball"}, {"center", to_std(set.lower())}, {"radius", set.ball_radius()}};
    case FeasibleSet::Kind::Simplex:
      return {{"type", "simplex"}, {"dim", set.dim()}, {"floor", set.simplex_floor()}};
    case FeasibleSet::Kind::Product: {
      nlohmann::json blocks = nlohmann::json::array();
      for (const auto& b : set.blocks()) blocks.push_back(feasible_set_to_json(b));
      return {{"type", "product"}, {"blocks", blocks}};
    }
  }
  return {};
}

BregmanGeometry geometry_from_json(const nlohmann::json& doc) {
  const auto type = doc.at("type").get<std::string>();
  if (type == "euclidean") return BregmanGeometry::euclidean();
  if (type == "kl") return BregmanGeometry::kl(doc.value("floor", 1e-6));
  if (type == "mahalanobis") {
    const auto rows = doc.at("P").get<std::vector<std::vector<double>>>();
    Matrix P(static_cast<Index>(rows.size()), static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) throw Error("Mahalanobis P must be square");
      for (std::size_t j = 0; j < rows.size(); ++j)
        P(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
    return BregmanGeometry::mahalanobis(P);
  }
  throw Error("unknown geometry type '" + type + "'");
}

nlohmann::json geometry_to_json(const BregmanGeometry& geom) {
  switch (geom.kind()) {
    case BregmanGeometry::Kind::Euclidean:
      return {{"type", "euclidean"}};
    case BregmanGeometry::Kind::KL:
      return {{"type", "kl"}, {"floor", geom.kl_floor()}};
    case BregmanGeometry::Kind::Mahalanobis: {
      const Matrix P = geom.metric().inverse();
      std::vector<std::vector<double>> rows(static_cast<std::size_t>(P.rows()));
      for (Index i = 0; i < P.rows(); ++i)
        for (Index j = 0; j < P.cols(); ++j) rows[i].push_back(P(i, j));
      return {{"type", "mahalanobis"}, {"P", rows}};
    }
  }
  return {};
}

}  // namespace omep
