#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "rpos/extreal.hpp"
#include "rpos/logmgf.hpp"

namespace rpos {

using StateId = std::int32_t;

// Finite irreducible nonnegative matrix with explicit support graph.
// States are opaque string labels kept in sorted order; weights are stored in
// the log domain (zero entries are simply absent). Construction validates
// strong connectivity of the support digraph and caches the period.
class SparseNonnegMatrix {
 public:
  static SparseNonnegMatrix from_triples(
      const std::vector<std::tuple<std::string, std::string, double>>& triples);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label_of(StateId i) const { return labels_[i]; }
  StateId index_of(const std::string& label) const;
  bool has_state(const std::string& label) const;

  int period() const { return period_; }

  bool has_edge(StateId x, StateId y) const;
  // log A(x,y); requires the edge to exist.
  double log_entry(StateId x, StateId y) const;
  double entry(StateId x, StateId y) const;

  // (target, log weight) pairs, sorted by target.
  const std::vector<std::pair<StateId, double>>& row(StateId x) const { return rows_[x]; }
  const std::vector<std::pair<StateId, double>>& col(StateId y) const { return cols_[y]; }

  std::vector<std::pair<StateId, StateId>> support_edges() const;
  std::size_t entry_count() const;

  double max_row_sum() const;

  // Support-preserving entrywise modification; factor must be positive.
  SparseNonnegMatrix with_entry_scaled(const std::string& x, const std::string& y,
                                       double factor) const;
  SparseNonnegMatrix with_all_scaled(double factor) const;

 private:
  std::vector<std::string> labels_;
  std::map<std::string, StateId> index_;
  std::vector<std::vector<std::pair<StateId, double>>> rows_;
  std::vector<std::vector<std::pair<StateId, double>>> cols_;
  int period_ = 1;
};

// Walk through the support graph, stored as a label sequence.
struct Walk {
  std::vector<std::string> vertices;
  std::size_t length() const { return vertices.empty() ? 0 : vertices.size() - 1; }
};

// Subgraph: vertex set plus edge set with endpoints inside the vertex set.
struct Subgraph {
  std::set<std::string> vertices;
  std::set<std::pair<std::string, std::string>> edges;

  static Subgraph vertices_only(std::set<std::string> vs);
  static Subgraph full_graph(const SparseNonnegMatrix& a);
  void validate() const;
  void validate_against(const SparseNonnegMatrix& a) const;
};

// Lazy row access to a countably infinite matrix. The enumeration is a
// bijection between available states and 0,1,2,...; the optional analytic
// excursion law gives phi_z at the root with certified tail bounds, which is
// what makes certified verdicts on infinite inputs possible.
struct StateGenerator {
  std::function<std::vector<std::pair<std::string, double>>(const std::string&)> row_fn;
  std::function<std::string(std::int64_t)> state_at;
  std::string root;
  int declared_period = 1;
  std::optional<logmgf::WeightedMeasure> analytic_excursion_law;
  // log of the first-passage generating function to the root,
  //   u(i, lambda) = sum over paths state_at(i) -> root avoiding the root
  //                  of e^(lambda len) * weight,
  // as a certified log-scale bracket. Provided by models with ladder
  // structure; green-function constructions build on it.
  std::function<RealBracket(double, std::int64_t)> log_u_to_root;
  // Applies the measure-level effect of scaling every listed entry by the
  // given factor to a law of this model family, when representable. Batched
  // because edges of one excursion must be rescaled jointly.
  std::function<std::optional<logmgf::WeightedMeasure>(
      const logmgf::WeightedMeasure&,
      const std::vector<std::pair<std::string, std::string>>&, double)>
      scale_entries_measure;
  // Age-ladder structure: state_at(i) has exactly the transitions i -> i+1
  // and i -> root, so G_lambda(x, j) = 1{x<=j} e^(lambda (j-x)) +
  // G_lambda(x, root) e^(lambda j).
  bool age_ladder = false;
  std::string describe;
};

// Finite matrix or generator; most analyses accept either.
using SpectralInput = std::variant<SparseNonnegMatrix, StateGenerator>;

// ---- operations ----

SparseNonnegMatrix build_matrix(
    const std::vector<std::tuple<std::string, std::string, double>>& triples);

// Product of edge weights along the walk; empty product is 1.
ExtReal walk_weight(const SparseNonnegMatrix& a, const Walk& w);

// Restriction to the first `window` enumerated states, reduced to the
// strongly connected component of the root.
SparseNonnegMatrix truncate(const StateGenerator& gen, std::int64_t window);

// Matrix file I/O: one "x<TAB>y<TAB>weight" triple per line, '#' comments.
SparseNonnegMatrix read_matrix_tsv(const std::string& path);
SparseNonnegMatrix parse_matrix_tsv(const std::string& text);
std::string write_matrix_tsv(const SparseNonnegMatrix& a);

// Strongly connected components of an explicit digraph (Kosaraju); returns
// component id per vertex.
std::vector<int> strongly_connected_components(
    std::size_t n, const std::vector<std::vector<StateId>>& adj, int* count = nullptr);

// log A^n(x,x) by repeated squaring of the dense log-domain matrix;
// -inf when the diagonal power vanishes. n up to 2^20.
double log_dense_power_diag(const SparseNonnegMatrix& a, StateId x, std::int64_t n);

}  // namespace rpos
