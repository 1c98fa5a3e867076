#include "omep/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace omep {

namespace {

constexpr double kStochasticTol = 1e-12;

// Forward and backward reachability from node 0 over an adjacency matrix.
bool strongly_connected(const std::vector<std::vector<char>>& adj) {
  const auto n = adj.size();
  auto reach_all = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v) {
        const bool edge = forward ? adj[u][v] : adj[v][u];
        if (edge && !seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c; });
  };
  return reach_all(true) && reach_all(false);
}

}  // namespace

WeightedDigraph::WeightedDigraph(Matrix weights) : weights_(std::move(weights)) {
  const Index n = weights_.rows();
  if (n != weights_.cols()) throw Error("weight matrix must be square");
  if (n < 2) throw Error("a communication graph needs at least 2 agents");
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double a = weights_(i, j);
      if (!std::isfinite(a) || a < 0.0 || a > 1.0)
        throw Error("weight (" + std::to_string(i) + "," + std::to_string(j) +
                    ") outside [0,1]");
    }
    if (!(weights_(i, i) > 0.0))
      throw Error("agent " + std::to_string(i) + " has no self weight");
  }
  for (Index i = 0; i < n; ++i) {
    if (std::abs(weights_.row(i).sum() - 1.0) > kStochasticTol)
      throw Error("row " + std::to_string(i) + " does not sum to 1");
    if (std::abs(weights_.col(i).sum() - 1.0) > kStochasticTol)
      throw Error("column " + std::to_string(i) + " does not sum to 1");
  }
}

double WeightedDigraph::min_positive_weight() const {
  double g = 1.0;
  for (Index i = 0; i < weights_.size(); ++i) {
    const double a = weights_.data()[i];
    if (a > 0.0) g = std::min(g, a);
  }
  return g;
}

GraphSequence::GraphSequence(std::vector<WeightedDigraph> graphs, int period,
                             std::vector<int> schedule)
    : graphs_(std::move(graphs)), schedule_(std::move(schedule)), period_(period) {
  if (graphs_.empty()) throw Error("graph sequence is empty");
  if (period_ < 1) throw Error("connectivity period must be >= 1");
  const int n = graphs_.front().size();
  for (const auto& g : graphs_)
    if (g.size() != n) throw Error("member graphs disagree on agent count");
  if (schedule_.empty()) {
    schedule_.resize(graphs_.size());
    std::iota(schedule_.begin(), schedule_.end(), 0);
  }
  for (int k : schedule_)
    if (k < 0 || k >= static_cast<int>(graphs_.size()))
      throw Error("schedule refers to graph " + std::to_string(k) +
                  " which does not exist");
  gamma_ = 1.0;
  for (const auto& g : graphs_) gamma_ = std::min(gamma_, g.min_positive_weight());
}

const WeightedDigraph& GraphSequence::at(Round t) const {
  if (t < 0) throw Error("negative round");
  return graphs_[static_cast<std::size_t>(schedule_[t % cycle_length()])];
}

std::optional<Round> first_disconnected_window(const GraphSequence& seq) {
  const Round U = seq.period();
  const Round windows = std::lcm(seq.cycle_length(), U) / U;
  const auto n = static_cast<std::size_t>(seq.agents());
  for (Round k = 0; k < windows; ++k) {
    std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
    for (Round t = k * U; t < (k + 1) * U; ++t) {
      const auto& g = seq.at(t);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (g.has_edge(static_cast<int>(i), static_cast<int>(j))) adj[j][i] = 1;
    }
    if (!strongly_connected(adj)) return k * U;
  }
  return std::nullopt;
}

bool check_u_strong_connectivity(const GraphSequence& seq) {
  return !first_disconnected_window(seq).has_value();
}

Matrix transition_product(const GraphSequence& seq, Round t, Round s) {
  if (s < 0 || t < s) throw Error("transition_product requires t >= s >= 0");
  const int n = seq.agents();
  Matrix phi = Matrix::Identity(n, n);
  for (Round r = s; r < t; ++r) phi = seq.at(r).weights() * phi;
  return phi;
}

MixingCertificate mixing_certificate(int n, int period, double gamma) {
  if (n < 2 || period < 1) throw Error("mixing certificate needs n >= 2, U >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("gamma must lie in (0, 1]");
  const double k = static_cast<double>(n - 1) * period;
  const double log_q = k * std::log(gamma);
  const double q = std::exp(log_q);
  if (!(q < 1.0)) throw Error("gamma^((n-1)U) must be < 1");
  const double lambda = std::exp(std::log1p(-q) / k);
  const double C = 2.0 / lambda * (1.0 + std::exp(-log_q)) / (1.0 - q);
  return {C, lambda};
}

MixingCertificate mixing_certificate(const GraphSequence& seq) {
  if (auto bad = first_disconnected_window(seq))
    throw Error("sequence is not U-strongly connected: window starting at round " +
                std::to_string(*bad) + " has a disconnected union graph");
  return mixing_certificate(seq.agents(), seq.period(), seq.gamma());
}

Matrix mix(const GraphSequence& seq, Round t, const Matrix& states) {
  const Matrix& A = seq.at(t).weights();
  if (states.rows() != A.rows())
    throw Error("mix: expected " + std::to_string(A.rows()) + " agent rows, got " +
                std::to_string(states.rows()));
  Matrix out = Matrix::Zero(states.rows(), states.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j)
      if (A(i, j) != 0.0) out.row(i) += A(i, j) * states.row(j);
  return out;
}

MixingExcess worst_mixing_excess(const GraphSequence& seq, const MixingCertificate& cert,
                                 Round max_gap) {
  const int n = seq.agents();
  const Round starts = seq.cycle_length();
  const double inv_n = 1.0 / n;
  std::vector<MixingExcess> per_start(static_cast<std::size_t>(starts));
#pragma omp parallel for schedule(static)
  for (Round s = 0; s < starts; ++s) {
    MixingExcess worst{-std::numeric_limits<double>::infinity(), 0.0, 0.0, s, 0};
    Matrix phi = Matrix::Identity(n, n);
    double bound = cert.C;
    for (Round gap = 0; gap <= max_gap; ++gap) {
      if (gap > 0) {
        phi = seq.at(s + gap - 1).weights() * phi;
        bound *= cert.lambda;
      }
      const double dev = (phi.array() - inv_n).abs().maxCoeff();
      if (dev - bound > worst.excess) worst = {dev - bound, dev, bound, s, gap};
    }
    per_start[static_cast<std::size_t>(s)] = worst;
  }
  return *std::max_element(per_start.begin(), per_start.end(),
                           [](const auto& a, const auto& b) { return a.excess < b.excess; });
}

GraphSequence graph_sequence_from_json(const nlohmann::json& doc) {
  if (!doc.contains("graphs") || !doc.at("graphs").is_array() || doc.at("graphs").empty())
    throw Error("graph document needs a non-empty \"graphs\" array");
  std::vector<WeightedDigraph> graphs;
  for (const auto& g : doc.at("graphs")) {
    const auto rows = g.at("weights").get<std::vector<std::vector<double>>>();
    const auto n = rows.size();
    if (g.contains("n") && g.at("n").get<std::size_t>() != n)
      throw Error("graph \"n\" does not match its weight matrix");
    Matrix w(static_cast<Index>(n), static_cast<Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != n) throw Error("weight matrix row length mismatch");
      for (std::size_t j = 0; j < n; ++j)
        w(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
    graphs.emplace_back(std::move(w));
  }
  const int period = doc.value("period", static_cast<int>(graphs.size()));
  std::vector<int> schedule;
  if (doc.contains("schedule")) schedule = doc.at("schedule").get<std::vector<int>>();
  return GraphSequence(std::move(graphs), period, std::move(schedule));
}

nlohmann::json graph_sequence_to_json(const GraphSequence& seq) {
  nlohmann::json doc;
  doc["period"] = seq.period();
  doc["schedule"] = seq.schedule();
  auto& arr = doc["graphs"] = nlohmann::json::array();
  for (const auto& g : seq.graphs()) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(g.size()));
    for (int i = 0; i < g.size(); ++i)
      for (int j = 0; j < g.size(); ++j) rows[i].push_back(g.weights()(i, j));
    arr.push_back({{"n", g.size()}, {"weights", rows}});
  }
  return doc;
}

GraphSequence load_graph_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open graph file " + path);
  return graph_sequence_from_json(nlohmann::json::parse(in));
}

namespace graphs {

GraphSequence complete(int n) {
  return GraphSequence({WeightedDigraph(Matrix::Constant(n, n, 1.0 / n))}, 1);
}

WeightedDigraph lazy_cycles(int n, const std::vector<std::vector<int>>& cycles) {
  Matrix w = Matrix::Identity(n, n);
  for (const auto& cyc : cycles) {
    if (cyc.size() < 2) throw Error("a cycle needs at least two agents");
    for (std::size_t k = 0; k < cyc.size(); ++k) {
      const int from = cyc[k];
      const int to = cyc[(k + 1) % cyc.size()];
      w(to, to) = 0.5;
      w(to, from) += 0.5;
    }
  }
  return WeightedDigraph(std::move(w));
}

GraphSequence example1() {
  return GraphSequence({lazy_cycles(6, {{0, 1, 2}}), lazy_cycles(6, {{3, 4, 5}}),
                        lazy_cycles(6, {{2, 3}}), lazy_cycles(6, {{5, 0}})},
                       4);
}

GraphSequence example2() {
  return GraphSequence({lazy_cycles(5, {{0, 1, 2}, {3, 4}}), lazy_cycles(5, {{2, 3, 4}})},
                       2);
}

}  // namespace graphs

}  // namespace omep
