#include "rpos/excursion.hpp"

#include <algorithm>
#include <cmath>

#include "rpos/errors.hpp"

namespace rpos::excursion {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// In-place elimination state. Vertex ids follow the matrix ordering, which is
// lexicographic in the labels, so id order doubles as deterministic label
// order.
struct Engine {
  const SparseNonnegMatrix& a;
  double lambda;
  std::size_t n;
  std::vector<char> alive;
  std::vector<std::vector<ExtReal>> t;
  std::vector<std::set<StateId>> out_e, in_e;

  Engine(const SparseNonnegMatrix& m, double lam)
      : a(m), lambda(lam), n(m.size()), alive(n, 1), t(n, std::vector<ExtReal>(n)),
        out_e(n), in_e(n) {
    for (auto& [i, j] : a.support_edges()) {
      out_e[i].insert(j);
      in_e[j].insert(i);
    }
  }

  std::size_t degree(StateId v) const { return out_e[v].size() + in_e[v].size(); }

  void edge_off(StateId u, StateId v) {
    t[u][v] += ExtReal::from_log(lambda + a.log_entry(u, v));
    out_e[u].erase(v);
    in_e[v].erase(u);
  }

  void isolate(StateId z) {
    if (out_e[z].count(z)) edge_off(z, z);
    while (!out_e[z].empty()) edge_off(z, *out_e[z].begin());
    while (!in_e[z].empty()) edge_off(*in_e[z].begin(), z);
  }

  void vertex_off(StateId z) {
    ExtReal geom = t[z][z].geometric_series();
    for (std::size_t x = 0; x < n; ++x) {
      if (!alive[x] || StateId(x) == z || t[x][z].is_zero()) continue;
      ExtReal left = t[x][z] * geom;
      for (std::size_t y = 0; y < n; ++y) {
        if (!alive[y] || StateId(y) == z) continue;
        t[x][y] += left * t[z][y];
      }
    }
    alive[z] = 0;
  }
};

}  // namespace

GfValue GfTable::at(const std::string& x, const std::string& y) const {
  auto it = phi.find({x, y});
  return it == phi.end() ? ExtReal::zero() : it->second;
}

GfTable full_graph_table(const SparseNonnegMatrix& a, double lambda) {
  GfTable t;
  t.matrix = std::make_shared<SparseNonnegMatrix>(a);
  t.current = Subgraph::full_graph(a);
  t.lambda = lambda;
  for (const auto& x : a.labels())
    for (const auto& y : a.labels()) t.phi[{x, y}] = ExtReal::zero();
  return t;
}

GfTable remove_edge(const GfTable& t, const std::pair<std::string, std::string>& e) {
  if (!t.current.edges.count(e))
    throw EdgeNotInSubgraph("edge (" + e.first + "," + e.second + ") not in subgraph");
  GfTable r = t;
  r.current.edges.erase(e);
  StateId i = t.matrix->index_of(e.first), j = t.matrix->index_of(e.second);
  r.phi[e] = r.at(e.first, e.second) + ExtReal::from_log(t.lambda + t.matrix->log_entry(i, j));
  return r;
}

GfTable remove_vertex(const GfTable& t, const std::string& z) {
  if (!t.current.vertices.count(z)) throw VertexNotInSubgraph("vertex " + z + " not in subgraph");
  for (const auto& e : t.current.edges)
    if (e.first == z || e.second == z)
      throw VertexHasEdges("vertex " + z + " still has subgraph edges");
  GfTable r;
  r.matrix = t.matrix;
  r.lambda = t.lambda;
  r.current = t.current;
  r.current.vertices.erase(z);
  ExtReal geom = t.at(z, z).geometric_series();
  for (const auto& x : r.current.vertices)
    for (const auto& y : r.current.vertices)
      r.phi[{x, y}] = t.at(x, y) + t.at(x, z) * geom * t.at(z, y);
  return r;
}

GfTable eliminate_to(const SparseNonnegMatrix& a, const Subgraph& f, double lambda,
                     EliminationOrder order) {
  f.validate_against(a);
  Engine eng(a, lambda);
  std::set<StateId> targets;
  for (const auto& v : f.vertices) targets.insert(a.index_of(v));

  for (;;) {
    StateId pick = -1;
    std::size_t best = SIZE_MAX;
    for (std::size_t v = 0; v < eng.n; ++v) {
      if (!eng.alive[v] || targets.count(StateId(v))) continue;
      std::size_t d = eng.degree(StateId(v));
      bool better = d < best;
      if (d == best && order == EliminationOrder::MinDegreeReverseTies) better = true;
      if (better) {
        best = d;
        pick = StateId(v);
      }
    }
    if (pick < 0) break;
    eng.isolate(pick);
    eng.vertex_off(pick);
  }

  // remaining support edges among target vertices that F does not keep
  for (std::size_t u = 0; u < eng.n; ++u) {
    if (!eng.alive[u]) continue;
    std::vector<StateId> outs(eng.out_e[u].begin(), eng.out_e[u].end());
    for (StateId v : outs) {
      std::pair<std::string, std::string> e{a.label_of(StateId(u)), a.label_of(v)};
      if (!f.edges.count(e)) eng.edge_off(StateId(u), v);
    }
  }

  GfTable out;
  out.matrix = std::make_shared<SparseNonnegMatrix>(a);
  out.current = f;
  out.lambda = lambda;
  for (const auto& x : f.vertices)
    for (const auto& y : f.vertices)
      out.phi[{x, y}] = eng.t[a.index_of(x)][a.index_of(y)];
  return out;
}

GfValue excursion_gf(const SparseNonnegMatrix& a, const Subgraph& f, const std::string& x,
                     const std::string& y, double lambda, EliminationOrder order) {
  if (!f.vertices.count(x) || !f.vertices.count(y))
    throw PreconditionError("excursion_gf: endpoints must lie in the subgraph");
  return eliminate_to(a, f, lambda, order).at(x, y);
}

PsiPoint psi_point_finite(const SparseNonnegMatrix& a, const std::string& z, double lambda) {
  GfValue v = excursion_gf(a, Subgraph::vertices_only({z}), z, z, lambda);
  PsiPoint p;
  p.boundary = v.boundary();
  if (v.is_inf()) {
    p.value = {kInf, kInf, true};
  } else if (v.is_zero()) {
    p.value = {-kInf, -kInf, true};
  } else {
    p.value = {v.log_value(), v.log_value(), true};
  }
  return p;
}

namespace {

PsiPoint psi_point_generator(const StateGenerator& g, const std::string& z, double lambda) {
  if (g.analytic_excursion_law && z == g.root) {
    PsiPoint p;
    p.value = g.analytic_excursion_law->psi_bracket(lambda);
    return p;
  }
  if (z != g.root)
    throw PreconditionError("generator psi: reference vertex must be the root");
  // black-box: certified lower bounds from growing windows; a Richardson
  // extrapolation supplies an uncertified upper value
  std::vector<double> vals;
  double lo = -kInf;
  for (std::int64_t w : {64, 128, 256}) {
    try {
      PsiPoint q = psi_point_finite(truncate(g, w), z, lambda);
      if (q.value.is_infinite()) return {{kInf, kInf, true}, q.boundary};  // lower bound diverged
      lo = std::max(lo, q.value.lo);
      vals.push_back(q.value.lo);
    } catch (const EmptyComponent&) {
    }
  }
  if (vals.empty()) throw PreconditionError("generator psi: no usable truncation window");
  PsiPoint p;
  p.value.lo = lo;
  p.value.hi = kInf;
  p.value.certified = false;
  if (vals.size() == 3) {
    double d1 = vals[1] - vals[0], d2 = vals[2] - vals[1];
    if (d1 > d2 && d2 >= 0) {
      double denom = d1 - d2;
      p.value.hi = vals[2] + d2 * d2 / denom;  // heuristic
    }
  }
  return p;
}

}  // namespace

PsiPoint psi_point(const SpectralInput& in, const std::string& z, double lambda) {
  if (std::holds_alternative<SparseNonnegMatrix>(in))
    return psi_point_finite(std::get<SparseNonnegMatrix>(in), z, lambda);
  return psi_point_generator(std::get<StateGenerator>(in), z, lambda);
}

namespace {

bool certified_below(const PsiPoint& p) { return p.value.certified && p.value.hi < 0; }
bool at_or_above(const PsiPoint& p) {
  if (p.value.is_infinite()) return true;
  return p.value.lo >= 0;
}

// interior restriction S \ {z} has no cycle -> lambda_plus = +inf
bool interior_acyclic(const SparseNonnegMatrix& a, const std::string& z) {
  StateId zi = a.index_of(z);
  std::size_t n = a.size();
  std::vector<std::vector<StateId>> adj(n);
  bool loop = false;
  for (auto& [i, j] : a.support_edges()) {
    if (i == zi || j == zi) continue;
    if (i == j) loop = true;
    adj[i].push_back(j);
  }
  if (loop) return false;
  int ncomp = 0;
  std::vector<int> comp = strongly_connected_components(n, adj, &ncomp);
  std::vector<int> sz(ncomp, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (StateId(i) != zi) sz[comp[i]]++;
  for (int s : sz)
    if (s >= 2) return false;
  return true;
}

}  // namespace

PsiProfile psi_profile(const SpectralInput& in, const std::string& z,
                       const std::vector<double>& grid, double tol) {
  if (grid.empty()) throw PreconditionError("psi_profile: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw PreconditionError("psi_profile: grid must be sorted");

  PsiProfile prof;
  prof.z = z;
  std::vector<PsiPoint> pts;
  pts.reserve(grid.size());
  for (double lam : grid) {
    PsiPoint p = psi_point(in, z, lam);
    pts.push_back(p);
    PsiSample s;
    s.lambda = lam;
    s.psi = p.value;
    s.divergent = p.value.is_infinite();
    s.boundary = p.boundary;
    prof.samples.push_back(s);
  }

  // lambda_star from the first grid transition; refined by bisection
  bool found = false;
  double lo = 0, hi = 0;
  bool lo_cert = false;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    bool below = certified_below(pts[i]) || (!pts[i].value.certified && pts[i].value.lo < 0);
    if (below && at_or_above(pts[i + 1])) {
      lo = grid[i];
      hi = grid[i + 1];
      lo_cert = certified_below(pts[i]);
      found = true;
      break;
    }
  }
  if (!found) throw NoSignChange("grid misses lambda_star; widen the grid");
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    double mid = 0.5 * (lo + hi);
    PsiPoint p = psi_point(in, z, mid);
    if (certified_below(p))
      lo = mid;
    else
      hi = mid;
  }
  prof.lambda_star = {lo, hi};
  prof.lambda_star_certified = lo_cert;

  // lambda_plus
  if (std::holds_alternative<StateGenerator>(in)) {
    const auto& g = std::get<StateGenerator>(in);
    if (g.analytic_excursion_law) {
      double lp = g.analytic_excursion_law->lambda_plus();
      if (std::isfinite(lp)) {
        prof.lambda_plus = {MaybeBracket::Kind::Finite, {lp, lp}};
      } else {
        prof.lambda_plus = {MaybeBracket::Kind::Infinite, {}};
      }
    }
    return prof;
  }

  const auto& a = std::get<SparseNonnegMatrix>(in);
  if (interior_acyclic(a, z)) {
    prof.lambda_plus = {MaybeBracket::Kind::Infinite, {}};
    return prof;
  }
  double fin = prof.lambda_star.lo;
  double div = prof.lambda_star.hi;
  bool have_div = psi_point_finite(a, z, div).value.is_infinite();
  for (int k = 0; k < 64 && !have_div; ++k) {
    div = prof.lambda_star.hi + std::ldexp(1.0, k - 3);
    if (psi_point_finite(a, z, div).value.is_infinite())
      have_div = true;
    else
      fin = div;
  }
  if (!have_div) {
    prof.lambda_plus = {MaybeBracket::Kind::Unknown, {}};
    return prof;
  }
  for (int it = 0; it < 200 && div - fin > tol; ++it) {
    double mid = 0.5 * (fin + div);
    if (psi_point_finite(a, z, mid).value.is_infinite())
      div = mid;
    else
      fin = mid;
  }
  prof.lambda_plus = {MaybeBracket::Kind::Finite, {fin, div}};
  return prof;
}

}  // namespace rpos::excursion
