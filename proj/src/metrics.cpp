#include "omep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

namespace omep {

namespace {

double over(double v, std::size_t t) { return v / static_cast<double>(std::max<std::size_t>(t, 1)); }

MetricSeries finish(std::string name, int agent, std::vector<double> values) {
  MetricSeries s{std::move(name), agent, std::move(values), {}};
  s.over_t.resize(s.values.size());
  for (std::size_t t = 0; t < s.values.size(); ++t) s.over_t[t] = over(s.values[t], t);
  return s;
}

MetricSeries max_over(const std::vector<MetricSeries>& per_agent, const std::string& name) {
  std::vector<double> v(per_agent.front().values.size(), -std::numeric_limits<double>::infinity());
  for (const auto& s : per_agent)
    for (std::size_t t = 0; t < v.size(); ++t) v[t] = std::max(v[t], s.values[t]);
  return finish(name, -1, std::move(v));
}

void check_agent(const RunTrace& trace, int agent) {
  if (agent < 0 || agent >= trace.agents())
    throw Error("agent " + std::to_string(agent) + " out of range");
}

}  // namespace

std::vector<Vector> tabulate_path(const SolutionPath& path, Round last) {
  if (!path)
    throw Error("no solution path: supply a closed form or wrap the reference oracle "
                "(CachedSolutionPath)");
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(last + 1));
  for (Round t = 0; t <= last; ++t) out.push_back(path(t));
  return out;
}

MetricSeries dynamic_regret(const RunTrace& trace, const MepInstance& inst, int agent,
                            const std::vector<Vector>& path) {
  check_agent(trace, agent);
  if (!inst.f_value) throw Error("instance '" + inst.name + "' has no f_value oracle");
  if (path.size() < trace.x.size()) throw Error("solution path shorter than the trace");
  std::vector<double> v(trace.x.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < trace.x.size(); ++t) {
    acc -= inst.aggregate_value(static_cast<Round>(t), trace.x[t].row(agent).transpose(), path[t]);
    v[t] = acc;
  }
  return finish("regret", agent, std::move(v));
}

MetricSeries dynamic_regret(const RunTrace& trace, const MepInstance& inst, int agent,
                            const SolutionPath& path) {
  return dynamic_regret(trace, inst, agent, tabulate_path(path, trace.horizon()));
}

std::vector<MetricSeries> regret_all(const RunTrace& trace, const MepInstance& inst,
                                     const std::vector<Vector>& path, const std::string& name) {
  const int n = trace.agents();
  std::vector<MetricSeries> out(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = dynamic_regret(trace, inst, i, path);
      out[static_cast<std::size_t>(i)].name = name;
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  out.push_back(max_over(out, name));
  return out;
}

MetricSeries violation(const RunTrace& trace, const MepInstance& inst, int agent) {
  check_agent(trace, agent);
  std::vector<double> v(trace.x.size());
  Vector acc = Vector::Zero(inst.h);
  for (std::size_t t = 0; t < trace.x.size(); ++t) {
    acc += inst.coupled_constraint(static_cast<Round>(t), trace.x[t].row(agent).transpose());
    v[t] = acc.cwiseMax(0.0).norm();
  }
  return finish("violation", agent, std::move(v));
}

std::vector<MetricSeries> violation_all(const RunTrace& trace, const MepInstance& inst) {
  const int n = trace.agents();
  std::vector<MetricSeries> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = violation(trace, inst, i);
  out.push_back(max_over(out, "violation"));
  return out;
}

double path_length(const SolutionPath& path, Round horizon) {
  const auto xs = tabulate_path(path, horizon + 1);
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < xs.size(); ++t) total += (xs[t + 1] - xs[t]).norm();
  return total;
}

std::pair<MetricSeries, MetricSeries> consensus_errors(const RunTrace& trace) {
  auto spread = [](const Matrix& s) {
    const Eigen::RowVectorXd mean = s.colwise().mean();
    return (s.rowwise() - mean).rowwise().norm().maxCoeff();
  };
  std::vector<double> px(trace.x.size()), py(trace.y.size());
  for (std::size_t t = 0; t < trace.x.size(); ++t) {
    px[t] = spread(trace.x[t]);
    py[t] = spread(trace.y[t]);
  }
  return {finish("consensus_primal", -1, std::move(px)),
          finish("consensus_dual", -1, std::move(py))};
}

MetricSeries tracking_error(const RunTrace& trace, const std::vector<Vector>& path,
                            const std::string& name) {
  if (path.size() < trace.x.size()) throw Error("solution path shorter than the trace");
  std::vector<double> v(trace.x.size());
  for (std::size_t t = 0; t < trace.x.size(); ++t)
    v[t] = (trace.x[t].rowwise() - path[t].transpose()).rowwise().norm().maxCoeff();
  return finish(name, -1, std::move(v));
}

void write_metrics_csv(const std::string& path, const std::vector<MetricSeries>& series) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot write " + path);
  std::fputs("round,metric,agent,value,value_over_t\n", f);
  for (const auto& s : series)
    for (std::size_t t = 0; t < s.values.size(); ++t)
      std::fprintf(f, "%zu,%s,%d,%.17g,%.17g\n", t, s.name.c_str(), s.agent, s.values[t],
                   s.over_t[t]);
  std::fclose(f);
}

// ---------------------------------------------------------------- certificates

const CertificateCheck& CertificateReport::at(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw Error("no certificate check named '" + name + "'");
}

namespace {

// Tracks the worst margin of one bound across rounds.
struct Worst {
  CertificateCheck c;
  explicit Worst(std::string name) {
    c.name = std::move(name);
    c.margin = std::numeric_limits<double>::infinity();
  }
  void see(double bound, double observed, Round t) {
    const double m = bound - observed;
    if (m < c.margin || !std::isfinite(observed)) {
      c.margin = std::isfinite(observed) ? m : -std::numeric_limits<double>::infinity();
      c.bound = bound;
      c.observed = observed;
      c.round = t;
    }
  }
  CertificateCheck done() {
    if (!std::isfinite(c.margin) && c.margin > 0) c.margin = 0.0;  // no rounds seen
    c.pass = !c.applicable || c.margin >= -1e-9;
    return c;
  }
  CertificateCheck skip(std::string note) {
    c.applicable = false;
    c.margin = 0.0;
    c.note = std::move(note);
    return done();
  }
};

}  // namespace

CertificateReport certificate_check(const RunTrace& trace, const MepInstance& inst,
                                    const GraphSequence& seq, const BoundConstants& bounds,
                                    const BregmanGeometry& geom, const CertificateOptions& opts) {
  CertificateReport rep;
  rep.bounds = bounds;
  rep.mu = geom.mu();
  rep.ell = estimate_divergence_lipschitz(geom, inst.omega, opts.ell_samples, opts.seed);
  const double n = inst.n, m = static_cast<double>(inst.m), h = static_cast<double>(inst.h);
  const bool exact = trace.algorithm == Algorithm::Exact;
  const std::size_t rounds = trace.x.size();

  std::string mixing_error;
  try {
    rep.mixing = mixing_certificate(seq);
  } catch (const Error& e) {
    mixing_error = e.what();
  }
  const bool mixing_ok = mixing_error.empty();

  {
    Worst w("mixing_bound");
    if (mixing_ok) {
      const MixingExcess ex = worst_mixing_excess(seq, rep.mixing, opts.max_gap);
      w.see(ex.bound, ex.deviation, ex.gap);
      w.c.note = "worst start " + std::to_string(ex.start) + ", gap " + std::to_string(ex.gap);
      rep.checks.push_back(w.done());
    } else {
      rep.checks.push_back(w.skip(mixing_error));
    }
  }

  {
    Worst w("dual_norm_bound");
    const double bound = std::sqrt(n) * bounds.kappa2;
    for (std::size_t t = 0; t < rounds; ++t)
      w.see(bound, trace.y[t].rowwise().norm().maxCoeff(), static_cast<Round>(t));
    rep.checks.push_back(w.done());
  }

  {
    Worst w("step_bound");
    if (exact) {
      const double c = (std::sqrt(n) * h * bounds.kappa2 * bounds.kappa3 + bounds.kappa1) / geom.mu();
      for (std::size_t t = 0; t + 1 < rounds; ++t)
        w.see(c * trace.eta[t], (trace.x[t + 1] - trace.z[t]).rowwise().norm().maxCoeff(),
              static_cast<Round>(t));
      rep.checks.push_back(w.done());
    } else {
      rep.checks.push_back(w.skip("assumes exact gradients"));
    }
  }

  const double C = rep.mixing.C, lam = rep.mixing.lambda;
  if (mixing_ok) {
    rep.rho1 = std::sqrt(m) * n * bounds.kappa * C;
    rep.rho2 = (std::sqrt(m) * std::pow(n, 1.5) * h * bounds.kappa2 * bounds.kappa3 * C +
                std::sqrt(m) * n * bounds.kappa1 * C) /
               (geom.mu() * lam);
    rep.rho6 = (std::sqrt(h) * std::pow(n, 1.5) * C * bounds.kappa2 +
                std::sqrt(h) * n * C * bounds.kappa2) /
               lam;
  }
  const auto [cx, cy] = consensus_errors(trace);
  {
    Worst w("primal_consensus_envelope");
    if (!mixing_ok) {
      rep.checks.push_back(w.skip(mixing_error));
    } else if (!exact) {
      rep.checks.push_back(w.skip("assumes exact gradients"));
    } else {
      double envelope = 0.0;
      for (std::size_t t = 0; t < rounds; ++t) {
        envelope = lam * envelope + trace.eta[t];
        const double bound = rep.rho1 * std::pow(lam, static_cast<double>(t)) + rep.rho2 * envelope;
        w.see(bound, cx.values[t], static_cast<Round>(t));
      }
      rep.checks.push_back(w.done());
    }
  }
  {
    Worst w("dual_consensus_envelope");
    if (!mixing_ok) {
      rep.checks.push_back(w.skip(mixing_error));
    } else {
      double envelope = 0.0;
      for (std::size_t t = 0; t < rounds; ++t) {
        envelope = lam * envelope + trace.eta[t];
        w.see(rep.rho6 * envelope, cy.values[t], static_cast<Round>(t));
      }
      rep.checks.push_back(w.done());
    }
  }

  {
    // Observed is the Euclidean distance to Omega.
    Worst w("primal_feasibility");
    for (std::size_t t = 0; t < rounds; ++t) {
      double worst = 0.0;
      for (Index i = 0; i < trace.x[t].rows(); ++i) {
        const Vector xi = trace.x[t].row(i).transpose();
        worst = std::max(worst, (inst.omega.project(xi) - xi).norm());
      }
      w.see(1e-10, worst, static_cast<Round>(t));
    }
    rep.checks.push_back(w.done());
  }
  {
    Worst w("dual_nonnegativity");
    for (std::size_t t = 0; t < rounds; ++t)
      w.see(0.0, std::max(0.0, -trace.y[t].minCoeff()), static_cast<Round>(t));
    rep.checks.push_back(w.done());
  }

  for (const auto& c : rep.checks) rep.pass = rep.pass && c.pass;
  return rep;
}

nlohmann::json certificate_to_json(const CertificateReport& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    nlohmann::json j{{"name", c.name},         {"bound", c.bound}, {"observed", c.observed},
                     {"margin", c.margin},     {"round", c.round}, {"pass", c.pass},
                     {"applicable", c.applicable}};
    if (!c.note.empty()) j["note"] = c.note;
    checks.push_back(j);
  }
  return {{"pass", r.pass},
          {"checks", checks},
          {"bounds", bounds_to_json(r.bounds)},
          {"mixing", {{"C", r.mixing.C}, {"lambda", r.mixing.lambda}}},
          {"mu", r.mu},
          {"ell", r.ell},
          {"rho1", r.rho1},
          {"rho2", r.rho2},
          {"rho6", r.rho6}};
}

}  // namespace omep
