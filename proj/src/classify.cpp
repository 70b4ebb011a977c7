#include "rpos/classify.hpp"

#include <algorithm>
#include <cmath>

#include "rpos/errors.hpp"

namespace rpos::classify {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

RealBracket lambda_star_from_rho(const RealBracket& rho) {
  return {-std::log(rho.hi), -std::log(rho.lo)};
}

Classification classify_finite(const SparseNonnegMatrix& a, const std::string& z, double tol) {
  Classification c;
  spectral::SpectralEstimate est = spectral::rho_bisect(a, z, tol);
  c.evidence.rho = est.rho;
  c.evidence.lambda_star = lambda_star_from_rho(est.rho);

  excursion::PsiPoint at_lo = excursion::psi_point_finite(a, z, c.evidence.lambda_star.lo);
  excursion::PsiPoint at_hi = excursion::psi_point_finite(a, z, c.evidence.lambda_star.hi);
  c.evidence.psi_at_lambda_star = {at_lo.value.lo,
                                   at_hi.value.is_infinite() ? kInf : at_hi.value.hi, true};

  // slope just below lambda_star, evidence only
  double h = std::max(tol, 1e-6);
  excursion::PsiPoint back = excursion::psi_point_finite(a, z, c.evidence.lambda_star.lo - h);
  if (!at_lo.value.is_infinite() && !back.value.is_infinite()) {
    double slope = (at_lo.value.mid() - back.value.mid()) / h;
    c.evidence.left_derivative = {slope, slope, false};
  }

  // lambda_plus: +inf when the interior has no cycle, else a certified
  // divergence bracket; a witness psi value in (0, inf) between the brackets
  // settles strong R-positivity.
  excursion::PsiProfile prof;
  try {
    prof = excursion::psi_profile(a, z,
                                  {c.evidence.lambda_star.lo - 1.0, c.evidence.lambda_star.hi + 1e-9},
                                  tol);
  } catch (const NoSignChange&) {
    // fall through with a direct lambda_plus search below
  }
  c.evidence.lambda_plus = prof.lambda_plus;

  bool strong = false;
  if (c.evidence.lambda_plus.kind == excursion::MaybeBracket::Kind::Infinite) {
    strong = true;
    excursion::PsiPoint w =
        excursion::psi_point_finite(a, z, c.evidence.lambda_star.hi + 1.0);
    strong = !w.value.is_infinite() && w.value.lo > 0;
  } else if (c.evidence.lambda_plus.kind == excursion::MaybeBracket::Kind::Finite) {
    double lo = c.evidence.lambda_star.hi, hi = c.evidence.lambda_plus.bracket.lo;
    for (double t : {0.5, 0.25, 0.75, 0.125, 0.875, 0.0625}) {
      double lw = lo + t * (hi - lo);
      if (!(lw > lo)) continue;
      excursion::PsiPoint w = excursion::psi_point_finite(a, z, lw);
      if (!w.value.is_infinite() && w.value.lo > 0) {
        strong = true;
        break;
      }
    }
    c.evidence.lambda_gap = RealBracket{
        c.evidence.lambda_plus.bracket.lo - c.evidence.lambda_star.hi,
        c.evidence.lambda_plus.bracket.hi - c.evidence.lambda_star.lo};
  }
  if (strong) {
    c.verdict = Verdict::StronglyRPositive;
    c.certified = true;
  }
  return c;
}

Classification classify_analytic(const StateGenerator& g, double tol) {
  const logmgf::WeightedMeasure& mu = *g.analytic_excursion_law;
  Classification c;
  double lp = mu.lambda_plus();

  if (!std::isfinite(lp)) {
    spectral::SpectralEstimate est = spectral::rho_bisect(g, g.root, tol);
    c.evidence.rho = est.rho;
    c.evidence.lambda_star = lambda_star_from_rho(est.rho);
    c.evidence.lambda_plus = {excursion::MaybeBracket::Kind::Infinite, {}};
    c.verdict = Verdict::StronglyRPositive;
    c.certified = est.certified;
    return c;
  }

  c.evidence.lambda_plus = {excursion::MaybeBracket::Kind::Finite, {lp, lp}};
  logmgf::ValueBracket s = mu.psi_bracket(lp);
  std::optional<double> exact = mu.exact_psi_at(lp);

  auto fill_transient = [&]() {
    double rho = std::exp(-lp);
    c.evidence.rho = {rho * (1.0 - 1e-14), rho * (1.0 + 1e-14)};
    c.evidence.lambda_star = {lp, lp};
    c.evidence.lambda_gap = RealBracket{0.0, 0.0};
    c.evidence.psi_at_lambda_star = s;
    c.verdict = Verdict::RTransient;
    c.certified = true;
  };
  auto fill_strong = [&]() {
    spectral::SpectralEstimate est = spectral::rho_bisect(g, g.root, tol);
    c.evidence.rho = est.rho;
    c.evidence.lambda_star = lambda_star_from_rho(est.rho);
    c.evidence.psi_at_lambda_star = {0.0, 0.0, false};
    c.evidence.lambda_gap =
        RealBracket{lp - c.evidence.lambda_star.hi, lp - c.evidence.lambda_star.lo};
    c.verdict = Verdict::StronglyRPositive;
    c.certified = true;
  };

  if (exact) {
    if (*exact < 0) {
      fill_transient();
      return c;
    }
    if (*exact > 0) {
      fill_strong();
      return c;
    }
    // psi(lambda_plus) = 0 exactly: R-recurrent with lambda_star = lambda_plus
    double rho = std::exp(-lp);
    c.evidence.rho = {rho * (1.0 - 1e-14), rho * (1.0 + 1e-14)};
    c.evidence.lambda_star = {lp, lp};
    c.evidence.lambda_gap = RealBracket{0.0, 0.0};
    c.evidence.psi_at_lambda_star = {0.0, 0.0, true};
    logmgf::ValueBracket d = logmgf::tilted_mean_bracket(mu, lp);
    c.evidence.left_derivative = d;
    if (d.certified && d.is_infinite()) {
      c.verdict = Verdict::RNullRecurrent;
      c.certified = true;
    } else if (d.certified && std::isfinite(d.hi)) {
      c.verdict = Verdict::WeaklyRPositive;
      c.certified = true;
    } else {
      c.verdict = Verdict::Undecided;
      c.certified = false;
    }
    return c;
  }

  if (s.certified && s.hi < 0) {
    fill_transient();
    return c;
  }
  if (s.certified && s.lo > 0) {
    fill_strong();
    return c;
  }
  // boundary value straddles 0 without an exact hook: stay undecided
  c.evidence.psi_at_lambda_star = s;
  spectral::SpectralEstimate est = spectral::rho_bisect(g, g.root, tol);
  c.evidence.rho = est.rho;
  c.evidence.lambda_star = lambda_star_from_rho(est.rho);
  c.verdict = Verdict::Undecided;
  return c;
}

Classification classify_blackbox(const StateGenerator& g, double tol) {
  Classification c;
  spectral::SpectralEstimate est = spectral::rho_bisect(g, g.root, tol);
  c.evidence.rho = est.rho;
  if (est.rho.lo > 0)
    c.evidence.lambda_star = {std::isinf(est.rho.hi) ? -kInf : -std::log(est.rho.hi),
                              -std::log(est.rho.lo)};
  c.evidence.lambda_plus = {excursion::MaybeBracket::Kind::Unknown, {}};
  c.verdict = Verdict::Undecided;
  c.certified = false;
  return c;
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::RTransient: return "R-transient";
    case Verdict::RNullRecurrent: return "R-null-recurrent";
    case Verdict::WeaklyRPositive: return "weakly-R-positive";
    case Verdict::StronglyRPositive: return "strongly-R-positive";
    default: return "undecided";
  }
}

Classification classify(const SpectralInput& in, const std::string& z, double tol) {
  if (!(tol > 0)) throw PreconditionError("classify: tol must be positive");
  if (std::holds_alternative<SparseNonnegMatrix>(in))
    return classify_finite(std::get<SparseNonnegMatrix>(in), z, tol);
  const auto& g = std::get<StateGenerator>(in);
  if (z != g.root) throw PreconditionError("classify: generator reference must be the root");
  if (g.analytic_excursion_law) return classify_analytic(g, tol);
  return classify_blackbox(g, tol);
}

namespace {

void require_matrix_domination(const SparseNonnegMatrix& big, const SparseNonnegMatrix& small) {
  if (big.labels() != small.labels()) throw SupportMismatch("state sets differ");
  auto eb = big.support_edges();
  auto es = small.support_edges();
  if (eb != es) throw SupportMismatch("support graphs differ");
  bool strict = false;
  for (auto& [i, j] : eb) {
    double wb = big.log_entry(i, j), ws = small.log_entry(i, j);
    if (ws > wb + 1e-15) throw NotDominated("entry (" + big.label_of(i) + "," +
                                            big.label_of(j) + ") is larger in the smaller matrix");
    if (ws < wb) strict = true;
  }
  if (!strict) throw PreconditionError("matrices must differ somewhere");
}

std::vector<std::pair<std::string, std::string>> matrix_diff(const SparseNonnegMatrix& a,
                                                             const SparseNonnegMatrix& b) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto& [i, j] : a.support_edges())
    if (a.log_entry(i, j) != b.log_entry(b.index_of(a.label_of(i)), b.index_of(a.label_of(j))))
      out.emplace_back(a.label_of(i), a.label_of(j));
  return out;
}

std::string root_of(const SpectralInput& in) {
  if (std::holds_alternative<SparseNonnegMatrix>(in))
    return std::get<SparseNonnegMatrix>(in).labels()[0];
  return std::get<StateGenerator>(in).root;
}

bool exact_width(const RealBracket& r) { return r.hi - r.lo <= 1e-13 * std::max(1.0, r.hi); }

}  // namespace

PerturbationReport strong_rpos_test(const SpectralInput& a, const SpectralInput& b, double tol) {
  PerturbationReport rep;
  if (std::holds_alternative<SparseNonnegMatrix>(a) &&
      std::holds_alternative<SparseNonnegMatrix>(b)) {
    const auto& ma = std::get<SparseNonnegMatrix>(a);
    const auto& mb = std::get<SparseNonnegMatrix>(b);
    require_matrix_domination(ma, mb);
    rep.changed = matrix_diff(ma, mb);
  }
  rep.rho_a = spectral::rho_bisect(a, root_of(a), tol).rho;
  rep.rho_b = spectral::rho_bisect(b, root_of(b), tol).rho;
  if (rep.rho_b.hi < rep.rho_a.lo) {
    rep.certified_drop = true;
    rep.drop_lower_bound = rep.rho_a.lo - rep.rho_b.hi;
    rep.conclusion = "strongly-R-positive (certified rho drop)";
  } else if (exact_width(rep.rho_a) && exact_width(rep.rho_b) && rep.rho_a.lo <= rep.rho_b.hi &&
             rep.rho_b.lo <= rep.rho_a.hi) {
    rep.certified_equal = true;
    rep.conclusion = "not-strongly-R-positive (certified: no rho drop)";
  } else {
    rep.conclusion = "inconclusive (brackets overlap)";
  }
  return rep;
}

PerturbationReport rtrans_test(const SpectralInput& a, const SpectralInput& b, double tol,
                               Mixer mixer) {
  PerturbationReport rep;
  if (std::holds_alternative<SparseNonnegMatrix>(a) &&
      std::holds_alternative<SparseNonnegMatrix>(b)) {
    const auto& ma = std::get<SparseNonnegMatrix>(a);
    const auto& mb = std::get<SparseNonnegMatrix>(b);
    try {
      require_matrix_domination(mb, ma);  // A <= B
    } catch (const NotDominated&) {
      throw NotDominating("B must dominate A entrywise");
    }
    rep.changed = matrix_diff(ma, mb);
    if (!mixer) {
      SparseNonnegMatrix base = ma, upper = mb;
      mixer = [base, upper](double eps) -> SpectralInput {
        std::vector<std::tuple<std::string, std::string, double>> t;
        for (auto& [i, j] : base.support_edges()) {
          double w = base.entry(i, j);
          double wb = upper.entry(upper.index_of(base.label_of(i)), upper.index_of(base.label_of(j)));
          t.emplace_back(base.label_of(i), base.label_of(j), w + eps * (wb - w));
        }
        return SparseNonnegMatrix::from_triples(t);
      };
    }
  }
  rep.rho_a = spectral::rho_bisect(a, root_of(a), tol).rho;
  rep.rho_b = spectral::rho_bisect(b, root_of(b), tol).rho;

  if (exact_width(rep.rho_a) && exact_width(rep.rho_b) && rep.rho_a.lo <= rep.rho_b.hi &&
      rep.rho_b.lo <= rep.rho_a.hi) {
    rep.certified_equal = true;
    rep.conclusion = "R-transient (certified: rho(B) = rho(A))";
  }

  Classification ca = classify(a, root_of(a), tol);
  if (ca.verdict == Verdict::RTransient && ca.certified && mixer) {
    double eps = 1.0;
    for (int k = 0; k < 40; ++k, eps *= 0.5) {
      SpectralInput mixed = mixer(eps);
      RealBracket rm = spectral::rho_bisect(mixed, root_of(mixed), tol).rho;
      if (exact_width(rm) && rm.lo <= rep.rho_a.hi && rep.rho_a.lo <= rm.hi) {
        rep.epsilon = eps;
        break;
      }
    }
    if (rep.conclusion.empty())
      rep.conclusion = rep.epsilon ? "R-transient (eps-mixture keeps rho fixed)"
                                   : "inconclusive (no eps certified)";
  } else if (rep.conclusion.empty()) {
    rep.conclusion = "eps-search skipped (A not certified R-transient)";
  }
  return rep;
}

EssentialRadiusEstimate essential_radius(const SpectralInput& a, const Subgraph& window,
                                         const std::vector<double>& delta_grid, double tol) {
  EssentialRadiusEstimate est;
  est.window = window;
  est.value = kInf;

  auto scaled_input = [&](double delta) -> SpectralInput {
    if (std::holds_alternative<SparseNonnegMatrix>(a)) {
      SparseNonnegMatrix m = std::get<SparseNonnegMatrix>(a);
      for (const auto& [x, y] : window.edges) m = m.with_entry_scaled(x, y, delta);
      return m;
    }
    StateGenerator g = std::get<StateGenerator>(a);
    if (!g.scale_entries_measure || !g.analytic_excursion_law)
      throw PreconditionError("essential_radius: generator cannot scale window entries");
    std::vector<std::pair<std::string, std::string>> edges(window.edges.begin(),
                                                           window.edges.end());
    auto mod = g.scale_entries_measure(*g.analytic_excursion_law, edges, delta);
    if (!mod)
      throw PreconditionError("essential_radius: window not representable analytically");
    g.analytic_excursion_law = *mod;
    return g;
  };

  // deltas evaluated in decreasing order
  std::vector<double> ds = delta_grid;
  std::sort(ds.rbegin(), ds.rend());
  double prev = kInf;
  for (double d : ds) {
    if (!(d > 0)) throw PreconditionError("essential_radius: deltas must be positive");
    RealBracket r = spectral::rho_bisect(scaled_input(d), root_of(a), tol).rho;
    est.sweep.emplace_back(d, r);
    est.value = std::min(est.value, r.hi);
    if (r.hi > prev + tol) est.monotone_nonincreasing = false;
    prev = r.hi;
  }
  return est;
}

namespace {

// Decides lambda^F_{x,y,+} > 0 for a finite subprobability kernel: the
// interior SCCs lying on an x -> y excursion route must all have rho < 1.
bool pair_lambda_plus_positive(const SparseNonnegMatrix& p, const Subgraph& f,
                               const std::string& x, const std::string& y) {
  std::size_t n = p.size();
  StateId xi = p.index_of(x), yi = p.index_of(y);
  std::vector<char> interior(n, 1);
  for (const auto& v : f.vertices) interior[p.index_of(v)] = 0;

  // reachability from x through interior vertices
  std::vector<char> fwd(n, 0), bwd(n, 0);
  std::vector<StateId> stack;
  for (auto& [j, lw] : p.row(xi)) {
    (void)lw;
    if (interior[j] && !fwd[j]) {
      fwd[j] = 1;
      stack.push_back(j);
    }
  }
  while (!stack.empty()) {
    StateId u = stack.back();
    stack.pop_back();
    for (auto& [v, lw] : p.row(u)) {
      (void)lw;
      if (interior[v] && !fwd[v]) {
        fwd[v] = 1;
        stack.push_back(v);
      }
    }
  }
  for (auto& [i, lw] : p.col(yi)) {
    (void)lw;
    if (interior[i] && !bwd[i]) {
      bwd[i] = 1;
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    StateId u = stack.back();
    stack.pop_back();
    for (auto& [v, lw] : p.col(u)) {
      (void)lw;
      if (interior[v] && !bwd[v]) {
        bwd[v] = 1;
        stack.push_back(v);
      }
    }
  }

  std::vector<std::vector<StateId>> adj(n);
  for (auto& [i, j] : p.support_edges())
    if (interior[i] && interior[j]) adj[i].push_back(j);
  int nc = 0;
  std::vector<int> comp = strongly_connected_components(n, adj, &nc);

  double worst = 0.0;
  for (int c = 0; c < nc; ++c) {
    std::vector<std::tuple<std::string, std::string, double>> sub;
    bool relevant = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!interior[i] || comp[i] != c) continue;
      if (fwd[i] && bwd[i]) relevant = true;
    }
    if (!relevant) continue;
    for (auto& [i, j] : p.support_edges())
      if (interior[i] && interior[j] && comp[i] == c && comp[j] == c)
        sub.emplace_back(p.label_of(i), p.label_of(j), p.entry(i, j));
    if (sub.empty()) continue;  // acyclic singleton
    SparseNonnegMatrix m = SparseNonnegMatrix::from_triples(sub);
    worst = std::max(worst, spectral::rho_bisect(m, m.labels()[0], 1e-10).rho.hi);
  }
  return worst < 1.0 - 1e-9;
}

bool condition_holds(const SparseNonnegMatrix& p, const Subgraph& f) {
  for (const auto& x : f.vertices)
    for (const auto& y : f.vertices)
      if (!pair_lambda_plus_positive(p, f, x, y)) return false;
  return true;
}

}  // namespace

bool exp_moment_invariance_check(const SparseNonnegMatrix& p, const Subgraph& f1,
                                 const Subgraph& f2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    double s = 0.0;
    for (auto& [j, lw] : p.row(StateId(i))) s += std::exp(lw);
    if (s > 1.0 + 1e-12)
      throw NotSubprobability("row " + p.label_of(StateId(i)) + " sums to " + std::to_string(s));
  }
  f1.validate_against(p);
  f2.validate_against(p);
  if (f1.vertices.empty() || f2.vertices.empty())
    throw PreconditionError("subgraphs must be nonempty");
  return condition_holds(p, f1) == condition_holds(p, f2);
}

}  // namespace rpos::classify
