#include "rpos/models.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>

#include "rpos/errors.hpp"
#include "rpos/spectral.hpp"

namespace rpos::models {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LogSum {
  double mx = -kInf;
  double acc = 0.0;
  void add(double lg) {
    if (lg == -kInf) return;
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
  double log() const { return mx == -kInf ? -kInf : mx + std::log(acc); }
};

std::string int_label(std::int64_t v) { return std::to_string(v); }

std::optional<std::int64_t> parse_int_label(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  try {
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

// log(C_j), Catalan number
double log_catalan(std::int64_t j) {
  return std::lgamma(double(2 * j + 1)) - 2.0 * std::lgamma(double(j + 1)) -
         std::log(double(j + 1));
}

// ---- srw internals -------------------------------------------------------

// Tail of sum over lengths m = 2n > N of (2n)^k * 2 C_{n-1} (pq)^n e^(2 lambda n).
logmgf::LogTail catalan_tail(double log4pq, std::int64_t N, double lambda, int k) {
  double log_r = log4pq + 2.0 * lambda;
  if (log_r > 0) return {-kInf, kInf, true};
  std::int64_t n0 = N / 2 + 1;  // first n with 2n > N
  if (n0 < 3) return {-kInf, kInf, false};

  if (log_r == 0) {
    if (k >= 1) return {-kInf, kInf, true};  // terms ~ n^(k-3/2), k >= 1 diverges
    // 2 C_{n-1} 4^{-n} in [ (1/4)(m+1)^{-3/2}, (1/(2 sqrt(pi))) m^{-3/2} ], m = n-1
    logmgf::LogTail up = logmgf::zeta_series_tail(1.5, 0.0, -std::log(2.0 * std::sqrt(M_PI)),
                                                  n0 - 2, 0.0, 0);
    logmgf::LogTail dn =
        logmgf::zeta_series_tail(1.5, 0.0, -std::log(4.0), n0 - 1, 0.0, 0);
    return {dn.log_lo, up.log_hi, false};
  }

  double q = std::exp(log_r) * (k == 2 ? 1.0 + 0.5 / double(n0) : 1.0);
  if (q >= 1.0) return {-kInf, kInf, false};
  double log_t = double(k) * std::log(2.0 * double(n0)) + std::log(2.0) + log_catalan(n0 - 1) +
                 double(n0) * (log4pq - std::log(4.0) + 2.0 * lambda);
  return {log_t, log_t - std::log1p(-q), false};
}

logmgf::WeightedMeasure srw_measure(double p) {
  double q = 1.0 - p;
  double log_pq = std::log(p) + std::log(q);
  double log4pq = std::log(4.0) + log_pq;
  double lambda_plus = -0.5 * log4pq;
  auto log_mass = [log_pq](std::int64_t m) {
    if (m < 2 || m % 2 != 0) return -kInf;
    std::int64_t n = m / 2;
    return std::log(2.0) + log_catalan(n - 1) + double(n) * log_pq;
  };
  auto tail = [log4pq](std::int64_t N, double lambda, int k) {
    return catalan_tail(log4pq, N, lambda, k);
  };
  // phi = r / (1 + sqrt(1-r)) with r = 4pq e^(2 lambda); stable for all r<=1
  auto closed = [log4pq](double lambda) {
    double r = std::exp(log4pq + 2.0 * lambda);
    return std::log(r) - std::log1p(std::sqrt(std::max(0.0, 1.0 - r)));
  };
  return logmgf::WeightedMeasure::analytic(log_mass, tail, lambda_plus, 0.0, closed, 2);
}

// Scaling a set of edges at the origin rescales the two excursion
// orientations jointly: right excursions use (0,1) and (1,0) exactly once.
std::optional<logmgf::WeightedMeasure> srw_scale_edges(
    const logmgf::WeightedMeasure& law,
    const std::vector<std::pair<std::string, std::string>>& edges, double factor) {
  int right = 0, left = 0;
  for (const auto& [x, y] : edges) {
    auto vx = parse_int_label(x), vy = parse_int_label(y);
    if (!vx || !vy) return std::nullopt;
    if (*vx == 0 && *vy == 1)
      ++right;
    else if (*vx == 1 && *vy == 0)
      ++right;
    else if (*vx == 0 && *vy == -1)
      ++left;
    else if (*vx == -1 && *vy == 0)
      ++left;
    else
      return std::nullopt;
  }
  double fr = std::pow(factor, right), fl = std::pow(factor, left);
  return law.scaled(0.5 * (fr + fl));
}

StateGenerator srw_generator(double p, double scale_up_at_0, double scale_down_at_0) {
  if (!(p > 0 && p < 1)) throw BadParameter("srw: p must lie in (0,1)");
  StateGenerator g;
  double q = 1.0 - p;
  g.row_fn = [p, q, scale_up_at_0,
              scale_down_at_0](const std::string& s) -> std::vector<std::pair<std::string, double>> {
    auto v = parse_int_label(s);
    if (!v) throw PreconditionError("srw: bad state label " + s);
    double up = p, down = q;
    if (*v == 0) {
      up *= scale_up_at_0;
      down *= scale_down_at_0;
    }
    return {{int_label(*v + 1), up}, {int_label(*v - 1), down}};
  };
  g.state_at = [](std::int64_t i) {
    if (i == 0) return std::string("0");
    if (i % 2 == 1) return int_label((i + 1) / 2);
    return int_label(-i / 2);
  };
  g.root = "0";
  g.declared_period = 2;
  g.scale_entries_measure = [](const logmgf::WeightedMeasure& law,
                               const std::vector<std::pair<std::string, std::string>>& edges,
                               double f) { return srw_scale_edges(law, edges, f); };
  return g;
}

}  // namespace

double u01_closed(std::uint64_t bits) { return 1.0 - double(bits >> 11) * 0x1.0p-53; }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

StateGenerator srw(double p) {
  StateGenerator g = srw_generator(p, 1.0, 1.0);
  g.analytic_excursion_law = srw_measure(p);
  g.describe = "srw(p=" + std::to_string(p) + ")";
  return g;
}

StateGenerator srw_with_root_out_scaled(double p, double factor) {
  if (!(factor > 0)) throw BadParameter("srw: factor must be positive");
  StateGenerator g = srw_generator(p, factor, factor);
  g.analytic_excursion_law = srw_measure(p).scaled(factor);
  g.describe = "srw(p=" + std::to_string(p) + ", origin out-edges x" + std::to_string(factor) + ")";
  return g;
}

StateGenerator srw_with_origin_up_scaled(double p, double factor) {
  if (!(factor > 0)) throw BadParameter("srw: factor must be positive");
  StateGenerator g = srw_generator(p, factor, 1.0);
  g.analytic_excursion_law = srw_measure(p).scaled(0.5 * (1.0 + factor));
  g.describe = "srw(p=" + std::to_string(p) + ", edge (0,1) x" + std::to_string(factor) + ")";
  return g;
}

namespace {

// ---- pinning internals ---------------------------------------------------

// log-bracket of sum_{m > from} m^k exp(log_scale) m^(-alpha) e^((lambda-gamma) m)
RealBracket pinning_series_log(double alpha, double gamma, double log_scale, double lambda,
                               int k, std::int64_t from) {
  std::int64_t cap = std::int64_t(1) << 21;
  std::int64_t N = std::max<std::int64_t>(from + 32, 64);
  RealBracket best{-kInf, kInf};
  bool have = false;
  while (true) {
    LogSum s;
    for (std::int64_t m = from + 1; m <= N; ++m)
      s.add(log_scale + double(k) * std::log(double(m)) - alpha * std::log(double(m)) +
            (lambda - gamma) * double(m));
    logmgf::LogTail t = logmgf::zeta_series_tail(alpha, gamma, log_scale, N, lambda, k);
    if (t.divergent) return {kInf, kInf};
    if (std::isfinite(t.log_hi)) {
      double lo = t.log_lo == -kInf ? s.log() : log_add_exp(s.log(), t.log_lo);
      double hi = log_add_exp(s.log(), t.log_hi);
      best = {lo, hi};
      have = true;
      if (hi - lo <= 1e-13) return best;
    }
    if (N >= cap) break;
    N *= 2;
  }
  if (!have) throw PreconditionError("pinning series did not certify");
  return best;
}

struct PinningCore {
  double alpha, gamma;
  double log_scale;  // log of beta/Z (absolute) or ratio/zeta(alpha) (ratio built)
  std::optional<double> exact_log_ratio;

  double log_mass(std::int64_t m) const {
    return log_scale - alpha * std::log(double(m)) - gamma * double(m);
  }
  // log u(i, lambda) bracket: first-passage MGF from age i to 0
  RealBracket log_u(double lambda, std::int64_t i) const {
    RealBracket t = pinning_series_log(alpha, gamma, log_scale, lambda, 0, i);
    return {t.lo - lambda * double(i), t.hi - lambda * double(i)};
  }
};

logmgf::WeightedMeasure pinning_measure(const PinningCore& core) {
  PinningCore c = core;
  auto log_mass = [c](std::int64_t m) { return c.log_mass(m); };
  auto tail = [c](std::int64_t N, double lambda, int k) {
    return logmgf::zeta_series_tail(c.alpha, c.gamma, c.log_scale, N, lambda, k);
  };
  return logmgf::WeightedMeasure::analytic(log_mass, tail, core.gamma, core.exact_log_ratio);
}

std::optional<logmgf::WeightedMeasure> pinning_scale_edges(
    const logmgf::WeightedMeasure& law,
    const std::vector<std::pair<std::string, std::string>>& edges, double factor) {
  logmgf::WeightedMeasure out = law;
  for (const auto& [x, y] : edges) {
    auto vx = parse_int_label(x), vy = parse_int_label(y);
    if (!vx || !vy || *vx < 0) return std::nullopt;
    if (*vy == 0) {
      out = out.with_scaled_atom(*vx + 1, factor);  // return edge (j,0): length j+1
    } else if (*vy == *vx + 1) {
      // up edge (j,j+1) sits in every excursion of length >= j+2
      out = out.scaled(factor).with_prefix_scaled(*vx + 1, 1.0 / factor);
    } else {
      return std::nullopt;
    }
  }
  return out;
}

StateGenerator pinning_generator(const PinningCore& core) {
  PinningCore c = core;
  StateGenerator g;
  g.row_fn = [c](const std::string& s) -> std::vector<std::pair<std::string, double>> {
    auto v = parse_int_label(s);
    if (!v || *v < 0) throw PreconditionError("pinning: bad state label " + s);
    return {{int_label(*v + 1), 1.0}, {std::string("0"), std::exp(c.log_mass(*v + 1))}};
  };
  g.state_at = [](std::int64_t i) { return int_label(i); };
  g.root = "0";
  g.declared_period = 1;
  g.age_ladder = true;
  g.analytic_excursion_law = pinning_measure(c);
  g.log_u_to_root = [c](double lambda, std::int64_t i) { return c.log_u(lambda, i); };
  g.scale_entries_measure = [](const logmgf::WeightedMeasure& law,
                               const std::vector<std::pair<std::string, std::string>>& edges,
                               double f) { return pinning_scale_edges(law, edges, f); };
  return g;
}

RealBracket log_zeta_cached(double alpha) {
  static std::mutex mu;
  static std::map<double, RealBracket> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(alpha);
  if (it != cache.end()) return it->second;
  RealBracket r = pinning_series_log(alpha, 0.0, 0.0, 0.0, 0, 0);
  cache.emplace(alpha, r);
  return r;
}

PinningModel pinning_model(double alpha, double gamma, std::optional<double> beta_abs,
                           std::optional<double> ratio) {
  if (!(alpha > 1)) throw BadParameter("pinning: alpha must exceed 1");
  if (!(gamma > 0)) throw BadParameter("pinning: gamma must be positive");
  // Z = sum m^(-alpha) e^(-gamma m); zeta(alpha) = sum m^(-alpha)
  RealBracket logZ = pinning_series_log(alpha, gamma, 0.0, 0.0, 0, 0);
  RealBracket logZeta = log_zeta_cached(alpha);

  PinningModel m;
  m.alpha = alpha;
  m.gamma = gamma;
  m.beta_c = {std::exp(logZ.lo - logZeta.hi), std::exp(logZ.hi - logZeta.lo)};

  PinningCore core;
  core.alpha = alpha;
  core.gamma = gamma;
  if (ratio) {
    if (!(*ratio > 0)) throw BadParameter("pinning: beta/beta_c ratio must be positive");
    core.log_scale = std::log(*ratio) - logZeta.mid();
    core.exact_log_ratio = std::log(*ratio);
    m.beta = *ratio * m.beta_c.mid();
    m.beta_ratio = *ratio;
  } else {
    if (!beta_abs || !(*beta_abs > 0)) throw BadParameter("pinning: beta must be positive");
    core.log_scale = std::log(*beta_abs) - logZ.mid();
    m.beta = *beta_abs;
  }
  m.gen = pinning_generator(core);
  m.gen.describe = "pinning(alpha=" + std::to_string(alpha) + ", gamma=" + std::to_string(gamma) +
                   ", beta=" + std::to_string(m.beta) + ")";
  return m;
}

}  // namespace

PinningModel pinning(double alpha, double gamma, double beta) {
  return pinning_model(alpha, gamma, beta, std::nullopt);
}

PinningModel pinning_with_ratio(double alpha, double gamma, double ratio) {
  return pinning_model(alpha, gamma, std::nullopt, ratio);
}

StateGenerator pinning_with_returns_scaled(const PinningModel& m, std::int64_t j_max,
                                           double factor) {
  StateGenerator g = m.gen;
  std::vector<std::pair<std::string, std::string>> edges;
  for (std::int64_t j = 0; j <= j_max; ++j) edges.emplace_back(int_label(j), "0");
  auto law = g.scale_entries_measure(*g.analytic_excursion_law, edges, factor);
  g.analytic_excursion_law = *law;
  auto base_rows = m.gen.row_fn;
  g.row_fn = [base_rows, j_max, factor](const std::string& s) {
    auto rows = base_rows(s);
    auto v = parse_int_label(s);
    if (v && *v <= j_max)
      for (auto& [to, w] : rows)
        if (to == "0") w *= factor;
    return rows;
  };
  g.log_u_to_root = {};  // invalidated by the modification
  g.describe = m.gen.describe + " with returns 0.." + std::to_string(j_max) + " x" +
               std::to_string(factor);
  return g;
}

StateGenerator pinning_with_return_added(const PinningModel& m, double delta) {
  if (!(delta >= 0)) throw BadParameter("pinning: delta must be >= 0");
  StateGenerator g = m.gen;
  g.analytic_excursion_law = g.analytic_excursion_law->with_added_mass(1, delta);
  auto base_rows = m.gen.row_fn;
  g.row_fn = [base_rows, delta](const std::string& s) {
    auto rows = base_rows(s);
    if (s == "0")
      for (auto& [to, w] : rows)
        if (to == "0") w += delta;
    return rows;
  };
  g.log_u_to_root = {};
  g.describe = m.gen.describe + " with A(0,0)+" + std::to_string(delta);
  return g;
}

htransform::ProbKernel srw_htransform(double p) {
  if (!(p > 0 && p < 1)) throw BadParameter("srw_htransform: p must lie in (0,1)");
  // h(x) = (q/p)^(x/2) turns every srw into the symmetric walk
  StateGenerator g = srw_generator(0.5, 1.0, 1.0);
  g.analytic_excursion_law = srw_measure(0.5);
  g.describe = "srw_htransform(p=" + std::to_string(p) + ")";
  htransform::ProbKernel k;
  k.base = g;
  k.root = "0";
  return k;
}

htransform::ProbKernel pinning_htransform(const PinningModel& m, double tol) {
  const auto& law = m.gen.analytic_excursion_law;
  bool supercritical = false;
  if (m.beta_ratio) {
    supercritical = *m.beta_ratio > 1.0;
  } else {
    logmgf::ValueBracket s = law->psi_bracket(m.gamma);
    supercritical = s.certified && s.lo > 0;
  }
  if (!supercritical)
    throw PreconditionError("pinning_htransform: requires beta > beta_c (localized regime)");

  spectral::SpectralEstimate est = spectral::rho_bisect(m.gen, "0", tol);
  double lam_star = -std::log(est.point());
  double log_rho = -lam_star;

  // transformed excursion law: mass_P(m) = mass_A(m) e^(lam_star m)
  PinningCore base{m.alpha, m.gamma, 0.0, std::nullopt};
  // recover the A-level scale from the measure itself
  double log_scale_a = law->log_mass_at(1) + m.alpha * std::log(1.0) + m.gamma;
  base.log_scale = log_scale_a;
  PinningCore trans{m.alpha, m.gamma - lam_star, log_scale_a, std::nullopt};
  if (m.beta_ratio) trans.exact_log_ratio = std::log(*m.beta_ratio);

  // log u_A(i, lam_star), backward recursion over the precomputed window
  std::int64_t cap = 1 << 16;
  auto logu = std::make_shared<std::vector<double>>(std::size_t(cap + 1));
  {
    RealBracket tail = base.log_u(lam_star, cap);
    (*logu)[cap] = tail.mid();
    for (std::int64_t i = cap - 1; i >= 0; --i)
      (*logu)[i] = lam_star + log_add_exp(base.log_mass(i + 1), (*logu)[i + 1]);
  }

  StateGenerator g;
  PinningCore bc = base;
  g.row_fn = [bc, logu, log_rho, cap](const std::string& s)
      -> std::vector<std::pair<std::string, double>> {
    auto v = parse_int_label(s);
    if (!v || *v < 0) throw PreconditionError("pinning transform: bad state label " + s);
    std::int64_t i = *v;
    double lu_i = i <= cap ? (*logu)[i] : bc.log_u(-log_rho, i).mid();
    double q_return = std::exp(bc.log_mass(i + 1) - log_rho - lu_i);
    q_return = std::min(q_return, 1.0);
    return {{int_label(i + 1), 1.0 - q_return}, {std::string("0"), q_return}};
  };
  g.state_at = [](std::int64_t i) { return int_label(i); };
  g.root = "0";
  g.declared_period = 1;
  g.age_ladder = true;
  g.analytic_excursion_law = pinning_measure(trans);
  // u_P(i, lambda) = u_A(i, lambda + lam_star) / u_A(i, lam_star)
  g.log_u_to_root = [bc, logu, lam_star, cap](double lambda, std::int64_t i) -> RealBracket {
    RealBracket top = bc.log_u(lambda + lam_star, i);
    double bottom = i <= cap ? (*logu)[i] : bc.log_u(lam_star, i).mid();
    return {top.lo - bottom, top.hi - bottom};
  };
  g.scale_entries_measure = [](const logmgf::WeightedMeasure& lw,
                               const std::vector<std::pair<std::string, std::string>>& edges,
                               double f) { return pinning_scale_edges(lw, edges, f); };
  g.describe = m.gen.describe + " h-transform";

  htransform::ProbKernel k;
  k.base = g;
  k.root = "0";
  logmgf::SumBracket mean = g.analytic_excursion_law->moment_bracket(1, 0.0);
  logmgf::SumBracket mass = g.analytic_excursion_law->moment_bracket(0, 0.0);
  if (mean.certified && !mean.hi.is_inf())
    k.pi_root = RealBracket{std::exp(mass.lo.log_value() - mean.hi.log_value()),
                            std::exp(mass.hi.log_value() - mean.lo.log_value())};

  // validation: compare P^n(0,0) rho^n with A^n(0,0) on a truncation
  double dev = 0.0;
  {
    SparseNonnegMatrix ta = truncate(m.gen, 24);
    SparseNonnegMatrix tp = truncate(g, 24);
    for (std::int64_t n : {1, 2, 3, 5}) {
      double la = log_dense_power_diag(ta, ta.index_of("0"), n);
      double lp = log_dense_power_diag(tp, tp.index_of("0"), n);
      if (la == -kInf) continue;
      dev = std::max(dev, std::fabs(std::exp(lp + double(n) * log_rho - la) - 1.0));
    }
    double rdev = 0.0;
    for (std::int64_t i = 0; i < 64; ++i) {
      double s = 0.0;
      for (auto& [to, w] : g.row_fn(int_label(i))) s += w;
      rdev = std::max(rdev, std::fabs(s - 1.0));
    }
    k.validation.max_rowsum_dev = rdev;
    k.validation.power_identity_dev = dev;
  }
  return k;
}

SparseNonnegMatrix finite_random(std::uint64_t seed, int size, double density) {
  if (size < 1) throw BadParameter("finite_random: size must be >= 1");
  if (!(density > 0 && density <= 1)) throw BadParameter("finite_random: density in (0,1]");
  std::mt19937_64 rng(splitmix64(seed));
  auto next_u = [&rng]() { return double(rng() >> 11) * 0x1.0p-53; };  // [0,1)

  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<std::tuple<std::string, std::string, double>> triples;
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        if (next_u() < density)
          triples.emplace_back(int_label(i), int_label(j), 1.0 - next_u());
    try {
      return SparseNonnegMatrix::from_triples(triples);
    } catch (const PreconditionError&) {
      continue;
    }
  }
  // densify: add a spanning cycle on top of a fresh sample
  std::vector<std::tuple<std::string, std::string, double>> triples;
  std::set<std::pair<int, int>> used;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      if (next_u() < density) {
        triples.emplace_back(int_label(i), int_label(j), 1.0 - next_u());
        used.insert({i, j});
      }
  for (int i = 0; i < size; ++i) {
    int j = (i + 1) % size;
    if (!used.count({i, j})) triples.emplace_back(int_label(i), int_label(j), 1.0 - next_u());
  }
  return SparseNonnegMatrix::from_triples(triples);
}

std::vector<double> enumerate_excursions(const SparseNonnegMatrix& a, const Subgraph& f,
                                         const std::string& x, const std::string& y,
                                         int max_len) {
  if (max_len < 1 || max_len > 20)
    throw LimitExceeded("enumerate_excursions: max_len must lie in [1,20]");
  f.validate_against(a);
  if (!f.vertices.count(x) || !f.vertices.count(y))
    throw PreconditionError("enumerate_excursions: endpoints must lie in the subgraph");

  std::vector<double> out(std::size_t(max_len), 0.0);
  StateId xi = a.index_of(x), yi = a.index_of(y);
  std::vector<char> forbidden(a.size(), 0);
  for (const auto& v : f.vertices) forbidden[a.index_of(v)] = 1;
  bool xy_edge_in_f = f.edges.count({x, y}) > 0;

  // DFS over walk prefixes; interior vertices stay outside F
  struct Frame {
    StateId v;
    double w;
    int depth;
  };
  std::vector<Frame> stack;
  stack.push_back({xi, 1.0, 0});
  while (!stack.empty()) {
    Frame fr = stack.back();
    stack.pop_back();
    for (auto& [to, lw] : a.row(fr.v)) {
      double w = fr.w * std::exp(lw);
      int d = fr.depth + 1;
      if (to == yi && !(d == 1 && xy_edge_in_f)) out[d - 1] += w;
      if (!forbidden[to] && d < max_len) stack.push_back({to, w, d});
    }
  }
  return out;
}

double enumeration_tail_log_bound(const SparseNonnegMatrix& a, const Subgraph& f,
                                  const std::string& x, const std::string& y, int max_len,
                                  double lambda) {
  (void)f;
  (void)x;
  (void)y;
  double log_s = std::log(a.max_row_sum()) + lambda;
  if (log_s >= 0) return kInf;
  // sum_{m>L} (row-sum bound)^m = s^(L+1)/(1-s)
  return double(max_len + 1) * log_s - std::log1p(-std::exp(log_s));
}

ExtReal dense_power_diag(const SparseNonnegMatrix& a, const std::string& x, std::int64_t n) {
  double lg = log_dense_power_diag(a, a.index_of(x), n);
  return lg == -kInf ? ExtReal::zero() : ExtReal::from_log(lg);
}

logmgf::WeightedMeasure excursion_length_measure(const SparseNonnegMatrix& a,
                                                 const std::string& z, std::int64_t precompute) {
  StateId zi = a.index_of(z);
  std::size_t n = a.size();
  auto weights = std::make_shared<std::vector<double>>();  // log w(m), index m-1
  weights->reserve(std::size_t(precompute));

  std::vector<double> v(n, -kInf);  // log weight of interior walks z -> u
  {
    double loop = -kInf;
    for (auto& [j, lw] : a.row(zi)) {
      if (j == zi)
        loop = lw;
      else
        v[j] = lw;
    }
    weights->push_back(loop);  // m = 1
  }
  for (std::int64_t m = 2; m <= precompute; ++m) {
    double back = -kInf;
    for (auto& [i, lw] : a.col(zi))
      if (i != zi && v[i] != -kInf) back = log_add_exp(back, v[i] + lw);
    weights->push_back(back);
    std::vector<double> nv(n, -kInf);
    for (std::size_t u = 0; u < n; ++u) {
      if (v[u] == -kInf || StateId(u) == zi) continue;
      for (auto& [t, lw] : a.row(StateId(u)))
        if (t != zi) nv[t] = log_add_exp(nv[t], v[u] + lw);
    }
    v = std::move(nv);
  }

  double log_rowsum = std::log(a.max_row_sum());
  auto log_mass = [weights](std::int64_t m) {
    if (m < 1 || m > std::int64_t(weights->size())) return -kInf;
    return (*weights)[std::size_t(m - 1)];
  };
  auto tail = [log_rowsum, weights](std::int64_t N, double lambda, int k) -> logmgf::LogTail {
    double log_u = log_rowsum + lambda;
    if (log_u >= 0) return {-kInf, kInf, false};  // cannot certify from row sums
    double log_q = log_u + double(k) * std::log1p(1.0 / double(N + 1));
    if (log_q >= 0) return {-kInf, kInf, false};
    double log_t = double(k) * std::log(double(N + 1)) + double(N + 1) * log_u;
    return {-kInf, log_t - std::log1p(-std::exp(log_q)), false};
  };
  return logmgf::WeightedMeasure::analytic(log_mass, tail, -log_rowsum);
}

namespace {

StateGenerator birth_death(double p) {
  if (!(p > 0 && p < 1)) throw BadParameter("birth_death: p must lie in (0,1)");
  StateGenerator g;
  double q = 1.0 - p;
  g.row_fn = [p, q](const std::string& s) -> std::vector<std::pair<std::string, double>> {
    auto v = parse_int_label(s);
    if (!v || *v < 0) throw PreconditionError("birth_death: bad state label " + s);
    if (*v == 0) return {{"1", 1.0}};
    return {{int_label(*v + 1), p}, {int_label(*v - 1), q}};
  };
  g.state_at = [](std::int64_t i) { return int_label(i); };
  g.root = "0";
  g.declared_period = 2;
  g.describe = "birth_death(p=" + std::to_string(p) + ")";
  return g;
}

}  // namespace

BuiltModel build(const ModelSpec& spec) {
  BuiltModel out;
  switch (spec.family) {
    case ModelSpec::Family::Srw: {
      if (spec.htransformed) {
        auto k = srw_htransform(spec.p);
        out.describe = std::get<StateGenerator>(k.base).describe;
        out.object = std::move(k);
      } else {
        StateGenerator g = srw(spec.p);
        out.describe = g.describe;
        out.object = std::move(g);
      }
      break;
    }
    case ModelSpec::Family::Pinning: {
      PinningModel m = spec.beta_over_bc
                           ? pinning_with_ratio(spec.alpha, spec.gamma, *spec.beta_over_bc)
                           : pinning(spec.alpha, spec.gamma,
                                     spec.beta ? *spec.beta
                                               : throw BadParameter("pinning: beta required"));
      out.pinning_detail = m;
      if (spec.htransformed) {
        auto k = pinning_htransform(m);
        out.describe = std::get<StateGenerator>(k.base).describe;
        out.object = std::move(k);
      } else {
        out.describe = m.gen.describe;
        out.object = m.gen;
      }
      break;
    }
    case ModelSpec::Family::FiniteRandom: {
      SparseNonnegMatrix m = finite_random(spec.seed, spec.size, spec.density);
      out.describe = "finite_random(seed=" + std::to_string(spec.seed) +
                     ", size=" + std::to_string(spec.size) +
                     ", density=" + std::to_string(spec.density) + ")";
      out.object = std::move(m);
      break;
    }
    case ModelSpec::Family::BirthDeath: {
      StateGenerator g = birth_death(spec.p);
      out.describe = g.describe;
      out.object = std::move(g);
      break;
    }
  }
  return out;
}

}  // namespace rpos::models
