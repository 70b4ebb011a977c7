#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rpos/core.hpp"

namespace rpos::excursion {

using GfValue = ExtReal;

// Table of excursion moment generating functions phi^F_{x,y}(lambda) over the
// vertex pairs of the current subgraph. Produced by elimination from the full
// graph, where every phi is zero because every length-1 walk is still an edge
// of the subgraph.
struct GfTable {
  std::shared_ptr<const SparseNonnegMatrix> matrix;
  Subgraph current;
  double lambda = 0.0;
  std::map<std::pair<std::string, std::string>, GfValue> phi;

  GfValue at(const std::string& x, const std::string& y) const;
};

GfTable full_graph_table(const SparseNonnegMatrix& a, double lambda);

// phi gains the single-edge excursion e^lambda A(e-, e+); the edge leaves the
// subgraph. Everything else is unchanged.
GfTable remove_edge(const GfTable& t, const std::pair<std::string, std::string>& e);

// Removes an isolated vertex z, rerouting walks through z via the geometric
// series in phi_{z,z}. Divergent when phi_{z,z} >= 1 and both factors are
// nonzero.
GfTable remove_vertex(const GfTable& t, const std::string& z);

enum class EliminationOrder { MinDegree, MinDegreeReverseTies };

// Full table for subgraph F by eliminating, in min-degree order, all vertices
// outside F (each preceded by its incident edges) and then every remaining
// support edge not in F.
GfTable eliminate_to(const SparseNonnegMatrix& a, const Subgraph& f, double lambda,
                     EliminationOrder order = EliminationOrder::MinDegree);

GfValue excursion_gf(const SparseNonnegMatrix& a, const Subgraph& f, const std::string& x,
                     const std::string& y, double lambda,
                     EliminationOrder order = EliminationOrder::MinDegree);

// psi_z(lambda) = log phi^{{z}}_{z,z}(lambda) with certification metadata.
struct PsiPoint {
  logmgf::ValueBracket value;  // +inf endpoints mark divergence
  bool boundary = false;       // geometric series hit the band around 1
};

PsiPoint psi_point_finite(const SparseNonnegMatrix& a, const std::string& z, double lambda);

// Uses the analytic excursion law when the generator has one (z must be the
// root); otherwise certified lower bounds from truncation windows with a
// heuristic Richardson upper value.
PsiPoint psi_point(const SpectralInput& in, const std::string& z, double lambda);

struct PsiSample {
  double lambda = 0.0;
  logmgf::ValueBracket psi;
  bool divergent = false;
  bool boundary = false;
};

struct MaybeBracket {
  enum class Kind { Finite, Infinite, Unknown } kind = Kind::Unknown;
  RealBracket bracket;
};

struct PsiProfile {
  std::string z;
  std::vector<PsiSample> samples;
  RealBracket lambda_star;
  bool lambda_star_certified = false;
  MaybeBracket lambda_plus;
};

PsiProfile psi_profile(const SpectralInput& in, const std::string& z,
                       const std::vector<double>& grid, double tol = 1e-9);

}  // namespace rpos::excursion
