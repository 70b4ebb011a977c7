#include "rpos/htransform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "rpos/errors.hpp"
#include "rpos/parallel.hpp"

namespace rpos::htransform {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> mat_apply(const SparseNonnegMatrix& a, const std::vector<double>& v) {
  std::vector<double> w(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (auto& [j, lw] : a.row(StateId(i))) w[i] += std::exp(lw) * v[j];
  return w;
}

std::vector<double> mat_apply_transpose(const SparseNonnegMatrix& a, const std::vector<double>& v) {
  std::vector<double> w(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (auto& [j, lw] : a.row(StateId(i))) w[j] += std::exp(lw) * v[i];
  return w;
}

struct PowerResult {
  std::vector<double> vec;
  double c = 0.0;
  double residual = 0.0;
  RealBracket cw;
};

std::uint64_t splitmix_step(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

PowerResult power_iteration(const SparseNonnegMatrix& a, double tol, bool transpose,
                            std::uint64_t start_seed = 0) {
  std::size_t n = a.size();
  int d = a.period();
  std::vector<double> v(n, 1.0);
  if (start_seed != 0) {
    std::uint64_t s = start_seed;
    for (auto& x : v) {
      s = splitmix_step(s);
      x = 0.1 + double(s >> 11) * 0x1.0p-53;
    }
  }
  auto step = [&](const std::vector<double>& x) {
    return transpose ? mat_apply_transpose(a, x) : mat_apply(a, x);
  };
  // On a period-d support the modulus-rho modes rotate through the d-th roots
  // of unity; summing d consecutive iterates weighted by rho^-j cancels them,
  // so the averaged vector tends to the eigenfunction even when the plain
  // iterates only cycle.
  long max_rounds = (200000 + 200 * long(n)) / d + 8;
  for (long round = 0; round < max_rounds; ++round) {
    double nrm = *std::max_element(v.begin(), v.end());
    for (auto& x : v) x /= nrm;
    std::vector<std::vector<double>> u{v};
    for (int j = 1; j <= d; ++j) u.push_back(step(u.back()));
    double growth = *std::max_element(u[d].begin(), u[d].end());
    double rho_hat = std::pow(growth, 1.0 / double(d));
    std::vector<double> avg(n, 0.0);
    for (int j = 0; j < d; ++j) {
      double scale = std::pow(rho_hat, -double(j));
      for (std::size_t i = 0; i < n; ++i) avg[i] += u[j][i] * scale;
    }
    std::vector<double> aavg = step(avg);
    double lo = kInf, hi = 0.0, num = 0.0, den = 0.0, res = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = aavg[i] / avg[i];
      lo = std::min(lo, r);
      hi = std::max(hi, r);
      num += aavg[i] * avg[i];
      den += avg[i] * avg[i];
      scale = std::max(scale, avg[i]);
    }
    double c = num / den;
    for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::fabs(aavg[i] - c * avg[i]));
    res /= scale;
    if (round >= 2 && hi - lo <= tol * c && res <= tol * c) {
      PowerResult out;
      out.vec = avg;
      out.c = c;
      out.residual = res;
      out.cw = {lo, hi};
      return out;
    }
    v = u[d];
  }
  throw NoConvergence("power iteration did not converge at the requested tolerance");
}

}  // namespace

Eigenpair pf_eigenpair(const SparseNonnegMatrix& a, double tol, std::uint64_t start_seed) {
  if (!(tol > 0)) throw PreconditionError("pf_eigenpair: tol must be positive");
  PowerResult r = power_iteration(a, tol, false, start_seed);
  Eigenpair e;
  e.c = r.c;
  e.residual = r.residual;
  e.cw = r.cw;
  double h0 = r.vec[0];
  for (std::size_t i = 0; i < a.size(); ++i) e.h[a.label_of(StateId(i))] = r.vec[i] / h0;
  return e;
}

bool ProbKernel::finite() const { return std::holds_alternative<SparseNonnegMatrix>(base); }

const SparseNonnegMatrix& ProbKernel::matrix() const {
  return std::get<SparseNonnegMatrix>(base);
}

const StateGenerator& ProbKernel::generator() const { return std::get<StateGenerator>(base); }

std::vector<std::pair<std::string, double>> ProbKernel::row(const std::string& x) const {
  std::vector<std::pair<std::string, double>> out;
  if (finite()) {
    const auto& m = matrix();
    StateId i = m.index_of(x);
    for (auto& [j, lw] : m.row(i)) out.emplace_back(m.label_of(j), std::exp(lw));
  } else {
    out = generator().row_fn(x);
    std::sort(out.begin(), out.end());
  }
  double s = 0.0;
  for (auto& [to, w] : out) s += w;
  for (auto& [to, w] : out) w /= s;
  return out;
}

ProbKernel doob_transform(const SparseNonnegMatrix& a, const std::map<std::string, double>& h,
                          double c, double tol) {
  if (!(c > 0)) throw PreconditionError("doob_transform: c must be positive");
  std::size_t n = a.size();
  std::vector<double> hv(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = h.find(a.label_of(StateId(i)));
    if (it == h.end() || !(it->second > 0))
      throw PreconditionError("doob_transform: h must be positive on every state");
    hv[i] = it->second;
  }
  std::vector<double> ah = mat_apply(a, hv);
  double res = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    res = std::max(res, std::fabs(ah[i] - c * hv[i]) / (c * hv[i]));
  if (res > tol) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", res);
    throw NotEigenpair(std::string("Ah = ch fails at relative residual ") + buf);
  }

  std::vector<std::tuple<std::string, std::string, double>> triples;
  double rowdev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    std::vector<std::pair<StateId, double>> row;
    for (auto& [j, lw] : a.row(StateId(i))) {
      double p = std::exp(lw) * hv[j] / (c * hv[i]);
      row.emplace_back(j, p);
      s += p;
    }
    rowdev = std::max(rowdev, std::fabs(s - 1.0));
    if (std::fabs(s - 1.0) > 10 * tol + 1e-12)
      throw RowSumViolation("row " + a.label_of(StateId(i)) + " sums to " + std::to_string(s));
    for (auto& [j, p] : row)
      triples.emplace_back(a.label_of(StateId(i)), a.label_of(j), p / s);
  }
  SparseNonnegMatrix p = SparseNonnegMatrix::from_triples(triples);

  ProbKernel k;
  k.base = p;
  k.root = a.labels()[0];
  k.validation.max_rowsum_dev = rowdev;

  // stationary law from the left eigenvector
  PowerResult left = power_iteration(p, std::min(tol, 1e-12), true);
  double tot = 0.0;
  for (double v : left.vec) tot += v;
  std::map<std::string, double> pi;
  for (std::size_t i = 0; i < n; ++i) pi[a.label_of(StateId(i))] = left.vec[i] / tot;
  k.pi = pi;

  // identity P^m(x,x) = c^(-m) A^m(x,x) on sampled powers
  double iddev = 0.0;
  std::size_t samples = std::min<std::size_t>(n, 4);
  for (std::int64_t m : {1, 2, 3, 5, 10}) {
    for (std::size_t xi = 0; xi < samples; ++xi) {
      double la = log_dense_power_diag(a, StateId(xi), m);
      double lp = log_dense_power_diag(p, StateId(xi), m);
      if (la == -kInf && lp == -kInf) continue;
      iddev = std::max(iddev, std::fabs(std::exp(lp + double(m) * std::log(c) - la) - 1.0));
    }
  }
  k.validation.power_identity_dev = iddev;
  return k;
}

ProbKernel wrap_stochastic(const SparseNonnegMatrix& a) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    double s = 0.0;
    for (auto& [j, lw] : a.row(StateId(i))) s += std::exp(lw);
    if (std::fabs(s - 1.0) > 1e-12)
      throw RowSumViolation("row " + a.label_of(StateId(i)) + " sums to " + std::to_string(s));
  }
  ProbKernel k;
  k.base = a;
  k.root = a.labels()[0];
  PowerResult left = power_iteration(a, 1e-12, true);
  double tot = 0.0;
  for (double v : left.vec) tot += v;
  std::map<std::string, double> pi;
  for (std::size_t i = 0; i < a.size(); ++i) pi[a.label_of(StateId(i))] = left.vec[i] / tot;
  k.pi = pi;
  return k;
}

namespace {

// log G_lambda(i, root) for an age-ladder generator: first passage times the
// diagonal renewal factor.
RealBracket ladder_log_green_to_root(const StateGenerator& g, double lambda, std::int64_t i) {
  if (!g.analytic_excursion_law || !g.log_u_to_root)
    throw PreconditionError("generator lacks analytic ladder hooks");
  logmgf::ValueBracket psi = g.analytic_excursion_law->psi_bracket(lambda);
  if (psi.is_infinite() || psi.hi >= 0) throw Divergent("G diverges at this tilt");
  // G(0,0) = 1/(1 - e^psi), increasing in psi
  RealBracket g00{-std::log1p(-std::exp(psi.lo)), -std::log1p(-std::exp(psi.hi))};
  if (i == 0) return g00;
  RealBracket u = g.log_u_to_root(lambda, i);
  return {u.lo + g00.lo, u.hi + g00.hi};
}

}  // namespace

std::map<std::string, double> excessive_function(const SpectralInput& in, const std::string& z,
                                                 double lambda, std::int64_t window) {
  std::map<std::string, double> h;
  if (std::holds_alternative<SparseNonnegMatrix>(in)) {
    const auto& a = std::get<SparseNonnegMatrix>(in);
    std::vector<double> col = spectral::green_column(a, lambda, z);  // throws Divergent
    for (std::size_t i = 0; i < a.size(); ++i) h[a.label_of(StateId(i))] = col[i];
    // A G(.,z) = e^-lambda (G(.,z) - 1_{x=z})
    double el = std::exp(-lambda);
    for (std::size_t i = 0; i < a.size(); ++i) {
      double lhs = 0.0;
      for (auto& [j, lw] : a.row(StateId(i))) lhs += std::exp(lw) * col[j];
      double rhs = el * (col[i] - (a.label_of(StateId(i)) == z ? 1.0 : 0.0));
      if (std::fabs(lhs - rhs) > 1e-9 * std::max(1.0, std::fabs(rhs)))
        throw Error("excessive_function: Green identity violated");
    }
    return h;
  }
  const auto& g = std::get<StateGenerator>(in);
  if (z != g.root) throw PreconditionError("excessive_function: generator target must be the root");
  if (!g.age_ladder) throw PreconditionError("excessive_function: generator lacks ladder hooks");
  std::vector<double> vals(window + 2);
  for (std::int64_t i = 0; i <= window + 1; ++i)
    vals[i] = std::exp(ladder_log_green_to_root(g, lambda, i).mid());
  double el = std::exp(-lambda);
  for (std::int64_t i = 0; i <= window; ++i) {
    double lhs = 0.0;
    for (auto& [to, w] : g.row_fn(g.state_at(i))) {
      if (to == g.root)
        lhs += w * vals[0];
      else if (to == g.state_at(i + 1))
        lhs += w * vals[i + 1];
      else
        throw PreconditionError("excessive_function: generator is not an age ladder");
    }
    double rhs = el * (vals[i] - (i == 0 ? 1.0 : 0.0));
    if (std::fabs(lhs - rhs) > 1e-8 * std::max(1.0, std::fabs(rhs)))
      throw Error("excessive_function: Green identity violated on the window");
    h[g.state_at(i)] = vals[i];
  }
  return h;
}

std::map<std::string, double> strictly_excessive(const SpectralInput& in,
                                                 const std::set<std::string>& sprime,
                                                 std::int64_t window) {
  if (sprime.empty()) throw PreconditionError("strictly_excessive: S' must be nonempty");
  std::string root = std::holds_alternative<SparseNonnegMatrix>(in)
                         ? std::get<SparseNonnegMatrix>(in).labels()[0]
                         : std::get<StateGenerator>(in).root;
  classify::Classification cl = classify::classify(in, root, 1e-9);
  if (cl.verdict != classify::Verdict::RTransient || !cl.certified)
    throw NotRTransient("input is not certified R-transient");

  const auto& g = std::get<StateGenerator>(in);
  if (!g.age_ladder) throw PreconditionError("strictly_excessive: generator lacks ladder hooks");
  double lam = cl.evidence.lambda_star.mid();
  double rho = std::exp(-lam);

  // ladder indices of S'
  std::vector<std::int64_t> sidx;
  for (const auto& s : sprime) {
    bool found = false;
    for (std::int64_t i = 0; i <= window; ++i)
      if (g.state_at(i) == s) {
        sidx.push_back(i);
        found = true;
        break;
      }
    if (!found) throw PreconditionError("strictly_excessive: S' state outside the window");
  }

  // G(x, j) on the ladder: the direct climb (possible for 1 <= x <= j, never
  // touching the root) plus paths through the last root visit,
  //   G(x, j) = 1{1<=x<=j} e^(lambda (j-x)) + G(x, 0) e^(lambda j).
  std::vector<double> g0(window + 2);
  for (std::int64_t i = 0; i <= window + 1; ++i)
    g0[i] = std::exp(ladder_log_green_to_root(g, lam, i).mid());
  auto green_xj = [&](std::int64_t x, std::int64_t j) {
    double v = g0[x] * std::exp(lam * double(j));
    if (x >= 1 && x <= j) v += std::exp(lam * double(j - x));
    return v;
  };
  std::vector<double> h(window + 2, 0.0);
  for (std::int64_t x = 0; x <= window + 1; ++x)
    for (std::int64_t j : sidx) h[x] += green_xj(x, j);

  std::map<std::string, double> out;
  for (std::int64_t x = 0; x <= window; ++x) {
    double lhs = 0.0;
    for (auto& [to, w] : g.row_fn(g.state_at(x))) {
      if (to == g.root)
        lhs += w * h[0];
      else
        lhs += w * h[x + 1];
    }
    bool in_sprime = std::find(sidx.begin(), sidx.end(), x) != sidx.end();
    double rhs = rho * h[x];
    if (in_sprime) {
      if (!(lhs < rhs * (1.0 - 1e-12)))
        throw Error("strictly_excessive: strict inequality failed on S'");
    } else if (lhs > rhs * (1.0 + 1e-9)) {
      throw Error("strictly_excessive: excessive inequality failed");
    }
    out[g.state_at(x)] = h[x];
  }
  return out;
}

namespace {

std::string smallest_successor(const ProbKernel& p, const std::string& x) {
  auto row = p.row(x);
  if (row.empty()) throw PreconditionError("state " + x + " has no successors");
  return std::min_element(row.begin(), row.end())->first;
}

}  // namespace

LyapunovCertificate lyapunov_certificate(const ProbKernel& p, const std::set<std::string>& sprime,
                                         std::int64_t window) {
  if (sprime.empty()) throw PreconditionError("lyapunov_certificate: S' must be nonempty");
  LyapunovCertificate cert;
  cert.sprime = sprime;
  cert.window = window;
  std::string x0 = *sprime.begin();
  std::string y0 = smallest_successor(p, x0);
  cert.halved_entry = {x0, y0};

  if (p.finite()) {
    const auto& m = p.matrix();
    for (const auto& s : sprime) m.index_of(s);
    SparseNonnegMatrix q = m.with_entry_scaled(x0, y0, 0.5);
    spectral::SpectralEstimate eq = spectral::rho_bisect(q, q.labels()[0], 1e-10);
    cert.rho_q = eq.rho;
    if (eq.rho.hi >= 1.0 - 1e-12)
      throw NotStronglyPositiveRecurrent("rho(Q) = 1 within brackets after halving " + x0 +
                                         "," + y0);
    double lam = -std::log(eq.rho.hi) - 1e-6;
    std::vector<double> f = spectral::green_column(q, lam, x0);
    for (std::size_t i = 0; i < m.size(); ++i) cert.f[m.label_of(StateId(i))] = f[i];
    cert.epsilon = 0.9 * (1.0 - eq.rho.hi);
    return cert;
  }

  const auto& g = p.generator();
  if (x0 != g.root)
    throw PreconditionError("lyapunov_certificate: halved entry must leave the root");
  if (!g.analytic_excursion_law || !g.scale_entries_measure)
    throw PreconditionError("lyapunov_certificate: generator lacks analytic hooks");
  auto qlaw = g.scale_entries_measure(*g.analytic_excursion_law, {{x0, y0}}, 0.5);
  if (!qlaw) throw PreconditionError("lyapunov_certificate: halving not representable");
  StateGenerator gq = g;
  gq.analytic_excursion_law = qlaw;
  spectral::SpectralEstimate eq = spectral::rho_bisect(gq, g.root, 1e-10);
  cert.rho_q = eq.rho;
  if (eq.rho.hi >= 1.0 - 1e-12)
    throw NotStronglyPositiveRecurrent("rho(Q) = 1 within brackets after halving " + x0 + "," +
                                       y0);
  if (!g.age_ladder || !g.log_u_to_root)
    throw PreconditionError("lyapunov_certificate: generator lacks ladder hooks for f");
  double lam = -std::log(eq.rho.hi) - 1e-6;
  // G^Q(x, 0): first passage of P (paths off the root coincide with Q) times
  // the renewal factor of Q.
  logmgf::ValueBracket psi_q = qlaw->psi_bracket(lam);
  if (psi_q.is_infinite() || psi_q.hi >= 0)
    throw NotStronglyPositiveRecurrent("Q Green function diverges at the chosen tilt");
  double log_g00 = -std::log1p(-std::exp(psi_q.mid()));
  cert.f[g.state_at(0)] = std::exp(log_g00);
  for (std::int64_t i = 1; i <= window + 1; ++i)
    cert.f[g.state_at(i)] = std::exp(g.log_u_to_root(lam, i).mid() + log_g00);
  cert.epsilon = 0.9 * (1.0 - eq.rho.hi);
  return cert;
}

CertificateCheck verify_certificate(const ProbKernel& p, const LyapunovCertificate& cert) {
  CertificateCheck out;
  out.ok = true;
  out.min_margin = kInf;
  if (!(cert.epsilon > 0 && cert.epsilon < 1)) {
    out.ok = false;
    out.violating_state = "(epsilon out of range)";
    return out;
  }
  for (const auto& s : cert.sprime)
    if (!cert.f.count(s)) throw WindowTooSmall("S' state " + s + " has no f value");

  for (const auto& [x, fx] : cert.f) {
    if (!(fx > 0)) {
      out.ok = false;
      out.violating_state = x;
      return out;
    }
    double pf = 0.0;
    bool complete = true;
    for (const auto& [y, w] : p.row(x)) {
      auto it = cert.f.find(y);
      if (it == cert.f.end()) {
        complete = false;
        break;
      }
      pf += w * it->second;
    }
    if (!complete) continue;  // boundary of the window
    if (cert.sprime.count(x)) {
      if (!std::isfinite(pf)) {
        out.ok = false;
        out.violating_state = x;
      }
      continue;
    }
    double margin = (1.0 - cert.epsilon) * fx - pf;
    out.min_margin = std::min(out.min_margin, margin);
    if (margin < 0) {
      out.ok = false;
      out.violating_state = x;
    }
  }
  return out;
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct LinearFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0, slope_stderr = 0.0;
  bool valid = false;
};

LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  LinearFit f;
  std::size_t n = xs.size();
  if (n < 10) return f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double den = double(n) * sxx - sx * sx;
  if (den <= 0) return f;
  f.slope = (double(n) * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / double(n);
  double ss_res = 0, ss_tot = 0, mean_y = sy / double(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pred = f.intercept + f.slope * xs[i];
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  if (n > 2 && den > 0) f.slope_stderr = std::sqrt(ss_res / double(n - 2) / (den / double(n)));
  f.valid = true;
  return f;
}

}  // namespace

ErgodicityFit simulate_returns(const ProbKernel& p, const std::string& x, std::uint64_t seed,
                               std::size_t n_samples, std::int64_t horizon,
                               const std::vector<double>& epsilons, int fit_steps) {
  if (n_samples < 1 || horizon < 2)
    throw PreconditionError("simulate_returns: need n_samples >= 1 and horizon >= 2");
  ErgodicityFit out;
  out.n_samples = n_samples;
  out.horizon = horizon;

  std::vector<std::int64_t> sigma(n_samples, 0);

  if (p.finite()) {
    const auto& m = p.matrix();
    StateId xi = m.index_of(x);
    std::size_t n = m.size();
    std::vector<std::vector<std::pair<StateId, double>>> cum(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (auto& [j, lw] : m.row(StateId(i))) s += std::exp(lw);
      double acc = 0.0;
      for (auto& [j, lw] : m.row(StateId(i))) {
        acc += std::exp(lw) / s;
        cum[i].emplace_back(j, acc);
      }
      cum[i].back().second = 1.0;
    }
    parallel::parallel_for(n_samples, [&](std::size_t k) {
      std::mt19937_64 rng(mix64(seed ^ (0x5851f42d4c957f2dULL * (k + 1))));
      StateId s = xi;
      std::int64_t t = 0;
      while (t < horizon) {
        double u = double(rng() >> 11) * 0x1.0p-53;
        const auto& row = cum[s];
        s = row.back().first;
        for (auto& [j, c] : row)
          if (u < c) {
            s = j;
            break;
          }
        ++t;
        if (s == xi) break;
      }
      sigma[k] = (t < horizon || (t == horizon && s == xi)) ? t : horizon + 1;
    });
  } else {
    const auto& g = p.generator();
    parallel::parallel_for(n_samples, [&](std::size_t k) {
      std::mt19937_64 rng(mix64(seed ^ (0x5851f42d4c957f2dULL * (k + 1))));
      std::string s = x;
      std::int64_t t = 0;
      while (t < horizon) {
        double u = double(rng() >> 11) * 0x1.0p-53;
        auto row = g.row_fn(s);
        std::sort(row.begin(), row.end());
        double tot = 0.0;
        for (auto& [to, w] : row) tot += w;
        double acc = 0.0;
        std::string next = row.back().first;
        for (auto& [to, w] : row) {
          acc += w / tot;
          if (u < acc) {
            next = to;
            break;
          }
        }
        s = next;
        ++t;
        if (s == x) break;
      }
      sigma[k] = (t < horizon || s == x) ? t : horizon + 1;
    });
  }

  std::size_t censored = 0, censored_half = 0;
  double mean = 0.0;
  std::size_t kept = 0;
  for (std::int64_t s : sigma) {
    if (s > horizon) ++censored;
    if (s > horizon / 2) ++censored_half;
    if (s <= horizon) {
      mean += double(s);
      ++kept;
    }
  }
  out.censored = censored;
  out.censor_fraction = double(censored) / double(n_samples);
  out.censor_fraction_half = double(censored_half) / double(n_samples);
  out.mean_return = kept ? mean / double(kept) : 0.0;
  out.heavy_tail = out.censor_fraction > 0.005 &&
                   out.censor_fraction > 0.5 * out.censor_fraction_half;
  if (censored) out.flags.push_back("censored-samples-excluded-from-moments");
  if (out.heavy_tail) out.flags.push_back("heavy-tail-suspected");

  for (double eps : epsilons) {
    MomentEstimate me;
    me.eps = eps;
    me.censored_excluded = censored;
    double mx = -kInf, acc = 0.0;
    for (std::int64_t s : sigma) {
      if (s > horizon) continue;
      double lg = eps * double(s);
      if (mx == -kInf) {
        mx = lg;
        acc = 1.0;
      } else if (lg <= mx) {
        acc += std::exp(lg - mx);
      } else {
        acc = acc * std::exp(mx - lg) + 1.0;
        mx = lg;
      }
    }
    double logmean = kept ? mx + std::log(acc) - std::log(double(kept)) : -kInf;
    me.estimate = logmean > 690.0 ? kInf : std::exp(logmean);
    out.moments.push_back(me);
  }

  // diagonal decay fit when the stationary mass at x is known
  double pix = -1.0;
  int period = 1;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  std::size_t xi = 0;
  if (p.finite() && p.pi) {
    const auto& m = p.matrix();
    pix = p.pi->at(x);
    period = m.period();
    xi = std::size_t(m.index_of(x));
    rows.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      double s = 0.0;
      for (auto& [j, lw] : m.row(StateId(i))) s += std::exp(lw);
      for (auto& [j, lw] : m.row(StateId(i))) rows[i].emplace_back(std::size_t(j), std::exp(lw) / s);
    }
  } else if (!p.finite() && p.pi_root && x == p.generator().root) {
    const auto& g = p.generator();
    pix = p.pi_root->mid();
    period = g.declared_period;
    std::size_t nwin = std::size_t(fit_steps) + 2;
    std::map<std::string, std::size_t> idx;
    std::vector<std::string> states(nwin);
    for (std::size_t i = 0; i < nwin; ++i) {
      states[i] = g.state_at(std::int64_t(i));
      idx[states[i]] = i;
    }
    xi = idx.at(x);
    rows.resize(nwin);
    for (std::size_t i = 0; i < nwin; ++i) {
      auto row = g.row_fn(states[i]);
      double s = 0.0;
      for (auto& [to, w] : row) s += w;
      for (auto& [to, w] : row) {
        auto it = idx.find(to);
        if (it != idx.end()) rows[i].emplace_back(it->second, w / s);
      }
    }
  } else {
    out.flags.push_back("pi-unavailable-no-decay-fit");
  }

  if (pix > 0) {
    // points below the accuracy floor of pi would only fit rounding noise
    double floor = 1e-10 * std::max(1.0, pix);
    if (!p.finite() && p.pi_root) floor = std::max(floor, 10.0 * p.pi_root->width());
    std::vector<double> v(rows.size(), 0.0);
    v[xi] = 1.0;
    std::vector<double> xs, ys;
    for (int step = 1; step <= fit_steps; ++step) {
      std::vector<double> nv(rows.size(), 0.0);
      for (std::size_t i = 0; i < rows.size(); ++i)
        if (v[i] != 0.0)
          for (auto& [j, w] : rows[i]) nv[j] += v[i] * w;
      v = std::move(nv);
      if (step % period != 0) continue;
      double d = std::fabs(v[xi] - pix * period);
      if (d > floor) {
        xs.push_back(double(step));
        ys.push_back(std::log(d));
      }
    }
    LinearFit lf = fit_line(xs, ys);
    if (lf.valid) {
      DecayFit df;
      df.rate = -lf.slope;
      df.rate_stderr = lf.slope_stderr;
      df.log_m = lf.intercept;
      df.r2 = lf.r2;
      df.period = period;
      df.valid = true;
      out.fit = df;
      if (period > 1) out.flags.push_back("periodic-subsequence-fit");
    }
  }
  return out;
}

}  // namespace rpos::htransform
