#include "rpos/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "rpos/errors.hpp"

namespace rpos::spectral {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One step of v <- v A in the log domain (v is a log-valued row vector).
std::vector<double> log_row_apply(const SparseNonnegMatrix& a, const std::vector<double>& v) {
  std::vector<double> nv(a.size(), -kInf);
  for (std::size_t j = 0; j < a.size(); ++j)
    for (auto& [i, lw] : a.col(StateId(j)))
      if (v[i] != -kInf) nv[j] = log_add_exp(nv[j], v[i] + lw);
  return nv;
}

// log A^n(x,x) by n sparse row applications.
double log_diag_power(const SparseNonnegMatrix& a, StateId x, std::int64_t n) {
  std::vector<double> v(a.size(), -kInf);
  v[x] = 0.0;
  for (std::int64_t k = 0; k < n; ++k) v = log_row_apply(a, v);
  return v[x];
}

// smallest k <= 2|S| with A^k(z,z) > 0, and the corresponding cycle bound
std::pair<std::int64_t, double> first_return_cycle(const SparseNonnegMatrix& a, StateId z) {
  std::vector<double> v(a.size(), -kInf);
  v[z] = 0.0;
  std::int64_t cap = 2 * std::int64_t(a.size()) + 2;
  for (std::int64_t k = 1; k <= cap; ++k) {
    v = log_row_apply(a, v);
    if (v[z] != -kInf) return {k, std::exp(v[z] / double(k))};
  }
  throw NoBracket("no return cycle found through the reference state");
}

struct DenseLU {
  std::size_t n = 0;
  std::vector<double> lu;
  std::vector<int> piv;

  static std::optional<DenseLU> factor(std::vector<double> m, std::size_t n) {
    DenseLU f;
    f.n = n;
    f.piv.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      for (std::size_t i = k + 1; i < n; ++i)
        if (std::fabs(m[i * n + k]) > std::fabs(m[p * n + k])) p = i;
      if (m[p * n + k] == 0.0) return std::nullopt;
      f.piv[k] = int(p);
      if (p != k)
        for (std::size_t j = 0; j < n; ++j) std::swap(m[p * n + j], m[k * n + j]);
      for (std::size_t i = k + 1; i < n; ++i) {
        m[i * n + k] /= m[k * n + k];
        double lik = m[i * n + k];
        for (std::size_t j = k + 1; j < n; ++j) m[i * n + j] -= lik * m[k * n + j];
      }
    }
    f.lu = std::move(m);
    return f;
  }

  std::vector<double> solve(std::vector<double> b) const {
    for (std::size_t k = 0; k < n; ++k) {
      if (std::size_t(piv[k]) != k) std::swap(b[piv[k]], b[k]);
      for (std::size_t i = k + 1; i < n; ++i) b[i] -= lu[i * n + k] * b[k];
    }
    for (std::size_t k = n; k-- > 0;) {
      for (std::size_t j = k + 1; j < n; ++j) b[k] -= lu[k * n + j] * b[j];
      b[k] /= lu[k * n + k];
    }
    return b;
  }
};

bool cert_below(const excursion::PsiPoint& p) { return p.value.certified && p.value.hi < 0; }

}  // namespace

double SpectralEstimate::point() const {
  if (std::isinf(rho.hi)) return rho.lo;
  return std::sqrt(rho.lo * rho.hi);
}

double rho_lower(const SparseNonnegMatrix& a, const std::string& x, std::int64_t n) {
  if (n < 1) throw PreconditionError("rho_lower: n must be >= 1");
  StateId xi = a.index_of(x);
  double lg = log_diag_power(a, xi, n);
  if (lg == -kInf)
    throw ZeroDiagonalPower("A^n(x,x) = 0; n is not compatible with the period");
  return std::exp(lg / double(n));
}

UpperCheck rho_upper(const SparseNonnegMatrix& a, const std::map<std::string, double>& h,
                     double c) {
  if (!(c > 0)) throw PreconditionError("rho_upper: c must be positive");
  std::vector<double> logh(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto it = h.find(a.label_of(StateId(i)));
    if (it == h.end() || !(it->second > 0))
      throw PreconditionError("rho_upper: h must be positive on every state");
    logh[i] = std::log(it->second);
  }
  UpperCheck out;
  out.verified = true;
  double lc = std::log(c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    double s = -kInf;
    for (auto& [j, lw] : a.row(StateId(i))) s = log_add_exp(s, lw + logh[j]);
    double ratio = std::exp(s - logh[i]);
    out.max_ratio = std::max(out.max_ratio, ratio);
    if (s > lc + logh[i] && out.verified) {
      out.verified = false;
      out.violating_state = a.label_of(StateId(i));
    }
  }
  return out;
}

namespace {

SpectralEstimate rho_bisect_finite(const SparseNonnegMatrix& a, const std::string& z,
                                   double tol) {
  StateId zi = a.index_of(z);
  auto [cyc_n, cyc] = first_return_cycle(a, zi);
  (void)cyc_n;
  double lam_lo = -std::log(a.max_row_sum()) - 1.0;
  double lam_hi = -std::log(cyc) + 1.0;

  auto below = [&](double lam) { return cert_below(excursion::psi_point_finite(a, z, lam)); };

  double widen = 1.0;
  int guard = 0;
  while (!below(lam_lo)) {
    lam_lo -= widen;
    widen *= 2;
    if (++guard > 60) throw NoBracket("rho_bisect: cannot certify psi < 0 on the left");
  }
  widen = 1.0;
  guard = 0;
  while (below(lam_hi)) {
    lam_hi += widen;
    widen *= 2;
    if (++guard > 60) throw NoBracket("rho_bisect: cannot find psi >= 0 on the right");
  }
  for (int it = 0; it < 300; ++it) {
    if (std::exp(-lam_lo) - std::exp(-lam_hi) <= tol) break;
    double mid = 0.5 * (lam_lo + lam_hi);
    if (below(mid))
      lam_lo = mid;
    else
      lam_hi = mid;
  }
  SpectralEstimate est;
  est.rho = {std::exp(-lam_hi), std::exp(-lam_lo)};
  est.lower_method = "psi-bisection/elimination";
  est.upper_method = "psi-bisection/elimination";
  return est;
}

SpectralEstimate rho_bisect_generator(const StateGenerator& g, const std::string& z,
                                      double tol) {
  if (!g.analytic_excursion_law) {
    // black-box: certified lower bounds only
    SpectralEstimate est;
    est.rho = {0.0, kInf};
    for (std::int64_t w : {32, 64, 128, 256}) {
      try {
        SparseNonnegMatrix t = truncate(g, w);
        SpectralEstimate e = rho_bisect_finite(t, g.root, tol);
        est.rho.lo = std::max(est.rho.lo, e.rho.lo);
      } catch (const EmptyComponent&) {
      }
    }
    est.lower_method = "truncation-window lower bound";
    est.upper_method = "none (black-box generator)";
    est.certified = false;
    return est;
  }
  if (z != g.root)
    throw PreconditionError("rho_bisect: generator reference vertex must be the root");
  const auto& mu = *g.analytic_excursion_law;
  double lp = mu.lambda_plus();
  SpectralEstimate est;
  est.lower_method = "psi-bisection/analytic-series";
  est.upper_method = "psi-bisection/analytic-series";

  if (std::isfinite(lp)) {
    logmgf::ValueBracket s = mu.psi_bracket(lp);
    if (s.certified && s.hi <= 0) {
      // psi(lambda_plus) <= 0 certified: lambda_star = lambda_plus exactly
      // (psi is strictly increasing below the boundary and +inf beyond it);
      // the bracket carries the rounding of exp(-lambda_plus)
      double r = std::exp(-lp);
      est.rho = {r * (1.0 - 1e-14), r * (1.0 + 1e-14)};
      return est;
    }
  }
  auto below = [&](double lam) {
    logmgf::ValueBracket b = mu.psi_bracket(lam);
    return b.certified && b.hi < 0;
  };
  double lam_hi = std::isfinite(lp) ? lp : 1.0;
  double lam_lo = lam_hi - 1.0;
  double widen = 1.0;
  int guard = 0;
  while (!below(lam_lo)) {
    lam_lo -= widen;
    widen *= 2;
    if (++guard > 60) throw NoBracket("rho_bisect: cannot certify psi < 0 on the left");
  }
  if (!std::isfinite(lp)) {
    widen = 1.0;
    guard = 0;
    while (below(lam_hi)) {
      lam_hi += widen;
      widen *= 2;
      if (++guard > 60) throw NoBracket("rho_bisect: cannot find psi >= 0 on the right");
    }
  }
  for (int it = 0; it < 300; ++it) {
    if (std::exp(-lam_lo) - std::exp(-lam_hi) <= tol) break;
    double mid = 0.5 * (lam_lo + lam_hi);
    if (below(mid))
      lam_lo = mid;
    else
      lam_hi = mid;
  }
  est.rho = {std::exp(-lam_hi), std::exp(-lam_lo)};
  return est;
}

}  // namespace

SpectralEstimate rho_bisect(const SpectralInput& in, const std::string& z, double tol) {
  if (!(tol > 0)) throw PreconditionError("rho_bisect: tol must be positive");
  if (std::holds_alternative<SparseNonnegMatrix>(in))
    return rho_bisect_finite(std::get<SparseNonnegMatrix>(in), z, tol);
  return rho_bisect_generator(std::get<StateGenerator>(in), z, tol);
}

std::vector<double> green_column(const SparseNonnegMatrix& a, double lambda,
                                 const std::string& z) {
  SpectralEstimate est = rho_bisect(a, a.labels()[0], 1e-10);
  if (!(std::exp(lambda) * est.rho.hi < 1.0))
    throw Divergent("green_column: e^lambda rho(A) >= 1");
  std::size_t n = a.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    m[i * n + i] = 1.0;
    for (auto& [j, lw] : a.row(StateId(i))) m[i * n + j] -= std::exp(lambda + lw);
  }
  auto lu = DenseLU::factor(m, n);
  if (!lu) throw Divergent("green_column: singular system");
  std::vector<double> b(n, 0.0);
  b[a.index_of(z)] = 1.0;
  std::vector<double> x = lu->solve(b);
  // iterative refinement to residual < 1e-12 * norm
  for (int pass = 0; pass < 8; ++pass) {
    std::vector<double> r = b;
    double nx = 0, nr = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = x[i];
      for (auto& [j, lw] : a.row(StateId(i))) s -= std::exp(lambda + lw) * x[j];
      r[i] -= s;
      nx = std::max(nx, std::fabs(x[i]));
      nr = std::max(nr, std::fabs(r[i]));
    }
    if (nr <= 1e-12 * std::max(1.0, nx)) break;
    std::vector<double> dx = lu->solve(r);
    for (std::size_t i = 0; i < n; ++i) x[i] += dx[i];
  }
  return x;
}

GreenValue green(const SpectralInput& in, double lambda, const std::string& x,
                 const std::string& y) {
  GreenValue out;
  out.lambda = lambda;
  out.x = x;
  out.y = y;
  if (std::holds_alternative<SparseNonnegMatrix>(in)) {
    const auto& a = std::get<SparseNonnegMatrix>(in);
    SpectralEstimate est = rho_bisect(a, a.labels()[0], 1e-10);
    double el = std::exp(lambda);
    if (el * est.rho.hi < 1.0) {
      std::vector<double> col = green_column(a, lambda, y);
      out.value = ExtReal::from_value(col[a.index_of(x)]);
      if (x == y) {
        excursion::PsiPoint p = excursion::psi_point_finite(a, x, lambda);
        if (!p.value.is_infinite() && p.value.hi < 0) {
          double lhs = col[a.index_of(x)] * (-std::expm1(p.value.mid()));
          out.diagonal_checked = std::fabs(lhs - 1.0) <= 1e-8;
        }
      }
      return out;
    }
    out.value = ExtReal::infinity(el * est.rho.lo <= 1.0);
    return out;
  }
  const auto& g = std::get<StateGenerator>(in);
  if (y != g.root)
    throw PreconditionError("green: generator path needs the root as target state");
  if (x == g.root) {
    if (!g.analytic_excursion_law)
      throw PreconditionError("green: generator has no analytic excursion law");
    logmgf::ValueBracket psi = g.analytic_excursion_law->psi_bracket(lambda);
    if (psi.is_infinite() || psi.lo >= 0) {
      out.value = ExtReal::infinity();
      return out;
    }
    out.value = ExtReal::from_log(psi.mid()).geometric_series();
    out.diagonal_checked = psi.certified;
    return out;
  }
  if (!g.log_u_to_root || !g.analytic_excursion_law)
    throw PreconditionError("green: generator lacks first-passage hooks");
  logmgf::ValueBracket psi = g.analytic_excursion_law->psi_bracket(lambda);
  if (psi.is_infinite() || psi.lo >= 0) {
    out.value = ExtReal::infinity();
    return out;
  }
  // G(x, root) = u(x) G(root, root), first passage times the renewal factor
  for (std::int64_t i = 0; i < 1 << 16; ++i) {
    if (g.state_at(i) == x) {
      RealBracket u = g.log_u_to_root(lambda, i);
      out.value = ExtReal::from_log(u.mid() - std::log1p(-std::exp(psi.mid())));
      return out;
    }
  }
  throw PreconditionError("green: state not found in enumeration");
}

double reducible_rho_upper(const std::vector<std::tuple<std::string, std::string, double>>& t,
                           double tol) {
  std::map<std::string, StateId> idx;
  std::vector<std::string> labels;
  for (auto& [x, y, w] : t) {
    (void)w;
    for (const auto* s : {&x, &y})
      if (!idx.count(*s)) {
        idx[*s] = StateId(labels.size());
        labels.push_back(*s);
      }
  }
  std::size_t n = labels.size();
  if (n == 0) return 0.0;
  std::vector<std::vector<StateId>> adj(n);
  for (auto& [x, y, w] : t) {
    (void)w;
    adj[idx[x]].push_back(idx[y]);
  }
  int nc = 0;
  std::vector<int> comp = strongly_connected_components(n, adj, &nc);

  double best = 0.0;
  for (int c = 0; c < nc; ++c) {
    std::vector<std::tuple<std::string, std::string, double>> sub;
    for (auto& [x, y, w] : t)
      if (comp[idx[x]] == c && comp[idx[y]] == c) sub.emplace_back(x, y, w);
    if (sub.empty()) continue;
    SparseNonnegMatrix m = SparseNonnegMatrix::from_triples(sub);
    best = std::max(best, rho_bisect(m, m.labels()[0], tol).rho.hi);
  }
  return best;
}

}  // namespace rpos::spectral
