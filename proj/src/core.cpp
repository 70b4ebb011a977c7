#include "rpos/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rpos/errors.hpp"

namespace rpos {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::vector<int> strongly_connected_components(
    std::size_t n, const std::vector<std::vector<StateId>>& adj, int* count) {
  // Kosaraju with explicit stacks.
  std::vector<std::vector<StateId>> radj(n);
  for (std::size_t u = 0; u < n; ++u)
    for (StateId v : adj[u]) radj[v].push_back(StateId(u));

  std::vector<char> seen(n, 0);
  std::vector<StateId> order;
  order.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<std::pair<StateId, std::size_t>> stack{{StateId(s), 0}};
    seen[s] = 1;
    while (!stack.empty()) {
      auto& [u, i] = stack.back();
      if (i < adj[u].size()) {
        StateId v = adj[u][i++];
        if (!seen[v]) {
          seen[v] = 1;
          stack.emplace_back(v, 0);
        }
      } else {
        order.push_back(u);
        stack.pop_back();
      }
    }
  }

  std::vector<int> comp(n, -1);
  int c = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (comp[*it] >= 0) continue;
    std::vector<StateId> stack{*it};
    comp[*it] = c;
    while (!stack.empty()) {
      StateId u = stack.back();
      stack.pop_back();
      for (StateId v : radj[u])
        if (comp[v] < 0) {
          comp[v] = c;
          stack.push_back(v);
        }
    }
    ++c;
  }
  if (count) *count = c;
  return comp;
}

SparseNonnegMatrix SparseNonnegMatrix::from_triples(
    const std::vector<std::tuple<std::string, std::string, double>>& triples) {
  SparseNonnegMatrix m;
  std::set<std::string> labels;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [x, y, w] : triples) {
    if (!(w > 0) || std::isnan(w) || std::isinf(w))
      throw NonpositiveWeight("entry (" + x + "," + y + ") must have a finite positive weight");
    if (!seen.insert({x, y}).second)
      throw PreconditionError("duplicate entry (" + x + "," + y + ")");
    labels.insert(x);
    labels.insert(y);
  }
  if (labels.empty()) throw PreconditionError("matrix needs at least one entry");
  m.labels_.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < m.labels_.size(); ++i) m.index_[m.labels_[i]] = StateId(i);

  std::size_t n = m.labels_.size();
  m.rows_.resize(n);
  m.cols_.resize(n);
  for (const auto& [x, y, w] : triples) {
    StateId i = m.index_[x], j = m.index_[y];
    m.rows_[i].emplace_back(j, std::log(w));
    m.cols_[j].emplace_back(i, std::log(w));
  }
  for (auto& r : m.rows_) std::sort(r.begin(), r.end());
  for (auto& c : m.cols_) std::sort(c.begin(), c.end());

  // irreducibility: support digraph strongly connected, and a 1-state matrix
  // must carry a loop
  std::vector<std::vector<StateId>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (auto& [j, lw] : m.rows_[i]) adj[i].push_back(j);
  int ncomp = 0;
  strongly_connected_components(n, adj, &ncomp);
  if (ncomp != 1) throw NotIrreducible("support digraph is not strongly connected");
  if (n == 1 && m.rows_[0].empty()) throw NotIrreducible("single state without a loop");

  // period: gcd of level[u] + 1 - level[v] over support edges, BFS levels
  std::vector<std::int64_t> level(n, -1);
  std::vector<StateId> queue{0};
  level[0] = 0;
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    StateId u = queue[qi];
    for (StateId v : adj[u])
      if (level[v] < 0) {
        level[v] = level[u] + 1;
        queue.push_back(v);
      }
  }
  std::int64_t g = 0;
  for (std::size_t u = 0; u < n; ++u)
    for (StateId v : adj[u]) g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
  m.period_ = g == 0 ? 1 : int(g);
  return m;
}

StateId SparseNonnegMatrix::index_of(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) throw PreconditionError("unknown state label: " + label);
  return it->second;
}

bool SparseNonnegMatrix::has_state(const std::string& label) const {
  return index_.count(label) > 0;
}

bool SparseNonnegMatrix::has_edge(StateId x, StateId y) const {
  const auto& r = rows_[x];
  auto it = std::lower_bound(r.begin(), r.end(), std::make_pair(y, -kInf));
  return it != r.end() && it->first == y;
}

double SparseNonnegMatrix::log_entry(StateId x, StateId y) const {
  const auto& r = rows_[x];
  auto it = std::lower_bound(r.begin(), r.end(), std::make_pair(y, -kInf));
  if (it == r.end() || it->first != y)
    throw EdgeNotInSupport("no entry (" + labels_[x] + "," + labels_[y] + ")");
  return it->second;
}

double SparseNonnegMatrix::entry(StateId x, StateId y) const { return std::exp(log_entry(x, y)); }

std::vector<std::pair<StateId, StateId>> SparseNonnegMatrix::support_edges() const {
  std::vector<std::pair<StateId, StateId>> out;
  for (std::size_t i = 0; i < rows_.size(); ++i)
    for (auto& [j, lw] : rows_[i]) out.emplace_back(StateId(i), j);
  return out;
}

std::size_t SparseNonnegMatrix::entry_count() const {
  std::size_t c = 0;
  for (auto& r : rows_) c += r.size();
  return c;
}

double SparseNonnegMatrix::max_row_sum() const {
  double best = -kInf;
  for (auto& r : rows_) {
    double s = -kInf;
    for (auto& [j, lw] : r) s = log_add_exp(s, lw);
    best = std::max(best, s);
  }
  return std::exp(best);
}

SparseNonnegMatrix SparseNonnegMatrix::with_entry_scaled(const std::string& x,
                                                         const std::string& y,
                                                         double factor) const {
  if (!(factor > 0)) throw NonpositiveWeight("scale factor must be positive");
  StateId i = index_of(x), j = index_of(y);
  log_entry(i, j);  // existence check
  std::vector<std::tuple<std::string, std::string, double>> triples;
  for (std::size_t u = 0; u < rows_.size(); ++u)
    for (auto& [v, lw] : rows_[u]) {
      double w = std::exp(lw);
      if (StateId(u) == i && v == j) w *= factor;
      triples.emplace_back(labels_[u], labels_[v], w);
    }
  return from_triples(triples);
}

SparseNonnegMatrix SparseNonnegMatrix::with_all_scaled(double factor) const {
  if (!(factor > 0)) throw NonpositiveWeight("scale factor must be positive");
  std::vector<std::tuple<std::string, std::string, double>> triples;
  for (std::size_t u = 0; u < rows_.size(); ++u)
    for (auto& [v, lw] : rows_[u])
      triples.emplace_back(labels_[u], labels_[v], std::exp(lw) * factor);
  return from_triples(triples);
}

Subgraph Subgraph::vertices_only(std::set<std::string> vs) {
  Subgraph f;
  f.vertices = std::move(vs);
  return f;
}

Subgraph Subgraph::full_graph(const SparseNonnegMatrix& a) {
  Subgraph f;
  for (const auto& l : a.labels()) f.vertices.insert(l);
  for (auto& [i, j] : a.support_edges()) f.edges.insert({a.label_of(i), a.label_of(j)});
  return f;
}

void Subgraph::validate() const {
  for (const auto& [x, y] : edges)
    if (!vertices.count(x) || !vertices.count(y))
      throw PreconditionError("subgraph edge (" + x + "," + y + ") has endpoint outside vertex set");
}

void Subgraph::validate_against(const SparseNonnegMatrix& a) const {
  validate();
  for (const auto& v : vertices)
    if (!a.has_state(v)) throw PreconditionError("subgraph vertex " + v + " not a state");
  for (const auto& [x, y] : edges)
    if (!a.has_edge(a.index_of(x), a.index_of(y)))
      throw EdgeNotInSupport("subgraph edge (" + x + "," + y + ") not in support");
}

SparseNonnegMatrix build_matrix(
    const std::vector<std::tuple<std::string, std::string, double>>& triples) {
  return SparseNonnegMatrix::from_triples(triples);
}

ExtReal walk_weight(const SparseNonnegMatrix& a, const Walk& w) {
  if (w.vertices.empty()) throw PreconditionError("walk must be nonempty");
  double lg = 0.0;
  for (std::size_t k = 1; k < w.vertices.size(); ++k)
    lg += a.log_entry(a.index_of(w.vertices[k - 1]), a.index_of(w.vertices[k]));
  return ExtReal::from_log(lg);
}

SparseNonnegMatrix truncate(const StateGenerator& gen, std::int64_t window) {
  if (window < 1) throw PreconditionError("truncate: window must be >= 1");
  std::vector<std::string> states(window);
  std::map<std::string, StateId> idx;
  for (std::int64_t i = 0; i < window; ++i) {
    states[i] = gen.state_at(i);
    idx[states[i]] = StateId(i);
  }
  if (!idx.count(gen.root)) throw PreconditionError("truncate: root not inside window");

  std::vector<std::vector<StateId>> adj(window);
  std::vector<std::vector<std::pair<StateId, double>>> weights(window);
  for (std::int64_t i = 0; i < window; ++i) {
    for (auto& [to, w] : gen.row_fn(states[i])) {
      auto it = idx.find(to);
      if (it == idx.end()) continue;
      if (!(w > 0)) throw NonpositiveWeight("generator row produced a nonpositive weight");
      adj[i].push_back(it->second);
      weights[i].emplace_back(it->second, w);
    }
  }
  std::vector<int> comp = strongly_connected_components(std::size_t(window), adj);
  int root_comp = comp[idx[gen.root]];

  std::vector<std::tuple<std::string, std::string, double>> triples;
  for (std::int64_t i = 0; i < window; ++i) {
    if (comp[i] != root_comp) continue;
    for (auto& [j, w] : weights[i])
      if (comp[j] == root_comp) triples.emplace_back(states[i], states[j], w);
  }
  if (triples.empty())
    throw EmptyComponent("root component inside the window carries no cycle");
  return SparseNonnegMatrix::from_triples(triples);
}

SparseNonnegMatrix parse_matrix_tsv(const std::string& text) {
  std::vector<std::tuple<std::string, std::string, double>> triples;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw ParseError("line " + std::to_string(lineno) + ": expected x<TAB>y<TAB>weight");
    std::string x = line.substr(0, t1);
    std::string y = line.substr(t1 + 1, t2 - t1 - 1);
    std::string ws = line.substr(t2 + 1);
    double w = 0;
    auto [p, ec] = std::from_chars(ws.data(), ws.data() + ws.size(), w);
    if (ec != std::errc() || p != ws.data() + ws.size())
      throw ParseError("line " + std::to_string(lineno) + ": bad weight '" + ws + "'");
    triples.emplace_back(x, y, w);
  }
  try {
    return SparseNonnegMatrix::from_triples(triples);
  } catch (const PreconditionError&) {
    throw;
  }
}

SparseNonnegMatrix read_matrix_tsv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open matrix file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_matrix_tsv(ss.str());
}

double log_dense_power_diag(const SparseNonnegMatrix& a, StateId x, std::int64_t n) {
  if (n < 0 || n > (std::int64_t(1) << 20))
    throw PreconditionError("log_dense_power_diag: n out of range");
  std::size_t m = a.size();
  if (n == 0) return 0.0;
  using Mat = std::vector<std::vector<double>>;
  Mat base(m, std::vector<double>(m, -kInf));
  for (auto& [i, j] : a.support_edges()) base[i][j] = a.log_entry(i, j);

  auto matmul = [m](const Mat& p, const Mat& q) {
    Mat r(m, std::vector<double>(m, -kInf));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < m; ++k) {
        if (p[i][k] == -kInf) continue;
        for (std::size_t j = 0; j < m; ++j)
          if (q[k][j] != -kInf) r[i][j] = log_add_exp(r[i][j], p[i][k] + q[k][j]);
      }
    return r;
  };

  Mat acc;
  bool have = false;
  Mat sq = base;
  std::int64_t k = n;
  while (k > 0) {
    if (k & 1) {
      acc = have ? matmul(acc, sq) : sq;
      have = true;
    }
    k >>= 1;
    if (k > 0) sq = matmul(sq, sq);
  }
  return acc[x][x];
}

std::string write_matrix_tsv(const SparseNonnegMatrix& a) {
  std::string out;
  char buf[64];
  for (const auto& x : a.labels()) {
    StateId i = a.index_of(x);
    for (auto& [j, lw] : a.row(i)) {
      auto res = std::to_chars(buf, buf + sizeof buf, std::exp(lw),
                               std::chars_format::general, 17);
      out += x;
      out += '\t';
      out += a.label_of(j);
      out += '\t';
      out.append(buf, res.ptr);
      out += '\n';
    }
  }
  return out;
}

}  // namespace rpos
