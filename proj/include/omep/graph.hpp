#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "omep/types.hpp"

namespace omep {

/// Row-stochastic and column-stochastic weight matrix of one communication
/// round. Entry (i, j) > 0 means agent i receives from agent j.
class WeightedDigraph {
 public:
  /// Validates n >= 2, entries in [0, 1], positive diagonal and double
  /// stochasticity to within 1e-12.
  explicit WeightedDigraph(Matrix weights);

  int size() const { return static_cast<int>(weights_.rows()); }
  const Matrix& weights() const { return weights_; }
  bool has_edge(int to, int from) const { return weights_(to, from) > 0.0; }
  double min_positive_weight() const;

 private:
  Matrix weights_;
};

/// Time-varying graph A(t). Round t uses graphs[schedule[t mod P]] where P is
/// the schedule length; the default schedule is 0, 1, ..., graphs.size()-1.
class GraphSequence {
 public:
  GraphSequence(std::vector<WeightedDigraph> graphs, int period,
                std::vector<int> schedule = {});

  int agents() const { return graphs_.front().size(); }
  /// Connectivity window length U.
  int period() const { return period_; }
  /// Smallest nonzero weight over all member graphs.
  double gamma() const { return gamma_; }
  /// Number of rounds after which the schedule repeats.
  Round cycle_length() const { return static_cast<Round>(schedule_.size()); }

  const WeightedDigraph& at(Round t) const;
  const std::vector<WeightedDigraph>& graphs() const { return graphs_; }
  const std::vector<int>& schedule() const { return schedule_; }

 private:
  std::vector<WeightedDigraph> graphs_;
  std::vector<int> schedule_;
  int period_;
  double gamma_;
};

/// Mixing constants: |[Phi(t,s)]_ij - 1/n| <= C * lambda^(t-s).
struct MixingCertificate {
  double C;
  double lambda;
};

/// Start round of the first aligned window [kU, (k+1)U) whose union graph is
/// not strongly connected, or nullopt when every window is.
std::optional<Round> first_disconnected_window(const GraphSequence& seq);

bool check_u_strong_connectivity(const GraphSequence& seq);

/// Phi(t, s) = A(t-1) ... A(s); identity when t == s.
Matrix transition_product(const GraphSequence& seq, Round t, Round s);

/// Throws Error naming the first disconnected window.
MixingCertificate mixing_certificate(const GraphSequence& seq);

/// Closed-form constants for given agent count, window and weight floor.
MixingCertificate mixing_certificate(int n, int period, double gamma);

/// Row i of the result is sum_j A(t)_ij * states.row(j). Rows are agents.
Matrix mix(const GraphSequence& seq, Round t, const Matrix& states);

/// Worst case of max_ij |[Phi(t,s)]_ij - 1/n| against C*lambda^(t-s).
struct MixingExcess {
  double excess;     ///< deviation - bound; nonpositive means the bound held
  double deviation;  ///< at the worst (s, t-s)
  double bound;
  Round start;
  Round gap;
};

/// Scans every start s in one schedule cycle and 0 <= t-s <= max_gap.
MixingExcess worst_mixing_excess(const GraphSequence& seq, const MixingCertificate& cert,
                                 Round max_gap);

GraphSequence graph_sequence_from_json(const nlohmann::json& doc);
nlohmann::json graph_sequence_to_json(const GraphSequence& seq);
GraphSequence load_graph_sequence(const std::string& path);

namespace graphs {

/// Uniform averaging over all n agents, U = 1.
GraphSequence complete(int n);

/// Six-agent stand-in for the four-graph U = 4 topology of the first
/// benchmark. Every member graph is disconnected; their union contains the
/// directed ring 1->2->...->6->1.
GraphSequence example1();

/// Five-agent, two-graph U = 2 stand-in for the Nash-Cournot benchmark.
GraphSequence example2();

/// Doubly stochastic matrix (1/2)(I + P) over disjoint directed cycles. Each
/// cycle lists agents in the order messages travel.
WeightedDigraph lazy_cycles(int n, const std::vector<std::vector<int>>& cycles);

}  // namespace graphs

}  // namespace omep
