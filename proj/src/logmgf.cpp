#include "rpos/logmgf.hpp"

#include <algorithm>
#include <cmath>

#include "rpos/errors.hpp"

namespace rpos::logmgf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::int64_t kTailCap = std::int64_t(1) << 21;
constexpr double kLogHeuristicDivergence = 27.631021115928547;  // log 1e12
constexpr double kLogRelGoal = 1e-12;

// Streaming log-sum-exp accumulator.
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

LogTail divergent_tail() { return {-kInf, kInf, true}; }
LogTail undecided_tail() { return {-kInf, kInf, false}; }

}  // namespace

bool ValueBracket::is_infinite() const { return std::isinf(lo) && lo > 0; }

RealBracket log_upper_gamma(double p, double y) {
  if (!(y > 0)) throw PreconditionError("log_upper_gamma: y must be positive");
  if (p > 41.0) throw PreconditionError("log_upper_gamma: p out of supported range");
  if (p > 1.0) {
    RealBracket rest = log_upper_gamma(p - 1.0, y);
    double lg = std::log(p - 1.0);
    double corner = (p - 1.0) * std::log(y) - y;
    return {log_add_exp(lg + rest.lo, corner), log_add_exp(lg + rest.hi, corner)};
  }
  // p <= 1: t^(p-1) is nonincreasing on [y, inf).
  double hi = (p - 1.0) * std::log(y) - y;
  double lo = (p - 1.0) * std::log(y + 1.0) - (y + 1.0);
  return {lo, hi};
}

// Tail of sum_{m>N} m^k * scale * m^(-alpha) e^(-gamma m) * e^(lambda m).
LogTail zeta_series_tail(double alpha, double gamma, double log_scale, std::int64_t N,
                         double lambda, int k) {
  double s = alpha - k;
  double a = gamma - lambda;
  if (a < 0) return divergent_tail();
  if (a == 0) {
    if (s <= 1.0) return divergent_tail();
    double c = -std::log(s - 1.0);
    return {log_scale + c + (1.0 - s) * std::log(double(N + 1)),
            log_scale + c + (1.0 - s) * std::log(double(N)), false};
  }
  // f(t) = t^(-s) e^(-a t) must be nonincreasing beyond N.
  if (s < 0 && double(N) < (-s / a) + 1.0) return undecided_tail();
  double base = (s - 1.0) * std::log(a);
  RealBracket gN = log_upper_gamma(1.0 - s, a * double(N));
  RealBracket gN1 = log_upper_gamma(1.0 - s, a * double(N + 1));
  return {log_scale + base + gN1.lo, log_scale + base + gN.hi, false};
}

namespace {

// Tail of sum_{m>N} m^k (1-r) r^(m-1) e^(lambda m).
LogTail geometric_log_tail(double r, std::int64_t N, double lambda, int k) {
  double log_u = std::log(r) + lambda;
  if (log_u >= 0) return divergent_tail();
  double log_q = log_u + double(k) * std::log1p(1.0 / double(N + 1));
  if (log_q >= 0) return undecided_tail();
  double log_t = std::log1p(-r) - std::log(r) + double(k) * std::log(double(N + 1)) +
                 double(N + 1) * log_u;
  return {log_t, log_t - std::log1p(-std::exp(log_q)), false};
}

}  // namespace

WeightedMeasure WeightedMeasure::from_atoms(const std::map<std::int64_t, double>& atoms) {
  WeightedMeasure m;
  m.is_atoms_ = true;
  for (const auto& [k, v] : atoms) {
    if (k < 1) throw PreconditionError("measure atoms must sit on positive integers");
    if (v < 0 || std::isnan(v)) throw PreconditionError("measure masses must be >= 0");
    if (v > 0) m.atoms_.emplace_back(k, v);
  }
  if (m.atoms_.empty()) throw PreconditionError("measure must be nonzero");
  return m;
}

WeightedMeasure WeightedMeasure::from_atoms(const std::map<std::int64_t, double>& atoms,
                                            double lambda_plus_cap) {
  WeightedMeasure m = from_atoms(atoms);
  m.lambda_plus_ = lambda_plus_cap;
  LogSum s;
  for (const auto& [k, v] : m.atoms_) s.add(std::log(v) + lambda_plus_cap * double(k));
  m.exact_psi_plus_ = s.log();
  return m;
}

WeightedMeasure WeightedMeasure::dirac(std::int64_t m, double mass) {
  return from_atoms({{m, mass}});
}

WeightedMeasure WeightedMeasure::geometric(double ratio) {
  if (!(ratio > 0 && ratio < 1)) throw BadParameter("geometric: ratio must be in (0,1)");
  double lr = std::log(ratio);
  return analytic(
      [ratio, lr](std::int64_t m) { return std::log1p(-ratio) + double(m - 1) * lr; },
      [ratio](std::int64_t N, double lambda, int k) {
        return geometric_log_tail(ratio, N, lambda, k);
      },
      -lr);
}

WeightedMeasure WeightedMeasure::zeta_type(double alpha, double gamma, double scale) {
  if (!(alpha > 1) || !(gamma > 0) || !(scale > 0))
    throw BadParameter("zeta_type: need alpha > 1, gamma > 0, scale > 0");
  double ls = std::log(scale);
  return analytic(
      [alpha, gamma, ls](std::int64_t m) {
        return ls - alpha * std::log(double(m)) - gamma * double(m);
      },
      [alpha, gamma, ls](std::int64_t N, double lambda, int k) {
        return zeta_series_tail(alpha, gamma, ls, N, lambda, k);
      },
      gamma);
}

WeightedMeasure WeightedMeasure::analytic(LogMassFn log_mass, TailFn log_tail,
                                          double lambda_plus,
                                          std::optional<double> exact_psi_at_plus,
                                          std::optional<ClosedPsiFn> closed_psi,
                                          std::int64_t support_stride) {
  WeightedMeasure m;
  m.is_atoms_ = false;
  m.base_log_mass_ = std::move(log_mass);
  m.base_log_tail_ = std::move(log_tail);
  m.lambda_plus_ = lambda_plus;
  m.exact_psi_plus_ = exact_psi_at_plus;
  m.closed_psi_ = std::move(closed_psi);
  m.support_stride_ = std::max<std::int64_t>(1, support_stride);
  return m;
}

std::int64_t WeightedMeasure::patch_ceiling() const {
  std::int64_t c = 1;
  c = std::max(c, prefix_below_);
  if (!atom_scale_.empty()) c = std::max(c, atom_scale_.rbegin()->first);
  if (!atom_add_.empty()) c = std::max(c, atom_add_.rbegin()->first);
  return c;
}

double WeightedMeasure::patched_log_mass(std::int64_t m) const {
  double lg;
  if (is_atoms_) {
    auto it = std::lower_bound(atoms_.begin(), atoms_.end(), std::make_pair(m, 0.0));
    lg = (it != atoms_.end() && it->first == m) ? std::log(it->second) : -kInf;
    return lg;  // atoms have patches baked in
  }
  lg = base_log_mass_(m) + global_log_scale_;
  if (m <= prefix_below_) lg += std::log(prefix_factor_);
  if (auto it = atom_scale_.find(m); it != atom_scale_.end()) lg += std::log(it->second);
  if (auto it = atom_add_.find(m); it != atom_add_.end())
    lg = log_add_exp(lg, std::log(it->second));
  return lg;
}

double WeightedMeasure::log_mass_at(std::int64_t m) const { return patched_log_mass(m); }
double WeightedMeasure::mass_at(std::int64_t m) const { return std::exp(patched_log_mass(m)); }

void WeightedMeasure::bump_exact_psi(double delta_mass_at_m, std::int64_t m) {
  if (!exact_psi_plus_ || !std::isfinite(lambda_plus_)) return;
  double v = std::exp(*exact_psi_plus_) + delta_mass_at_m * std::exp(lambda_plus_ * double(m));
  if (v > 0 && std::isfinite(v))
    exact_psi_plus_ = std::log(v);
  else
    exact_psi_plus_.reset();
}

WeightedMeasure WeightedMeasure::scaled(double factor) const {
  if (!(factor > 0)) throw BadParameter("scaled: factor must be positive");
  WeightedMeasure c = *this;
  if (is_atoms_) {
    for (auto& [m, v] : c.atoms_) v *= factor;
    if (c.exact_psi_plus_) *c.exact_psi_plus_ += std::log(factor);
  } else {
    c.global_log_scale_ += std::log(factor);
    if (c.exact_psi_plus_) *c.exact_psi_plus_ += std::log(factor);
  }
  return c;
}

WeightedMeasure WeightedMeasure::with_scaled_atom(std::int64_t m, double factor) const {
  if (!(factor > 0)) throw BadParameter("with_scaled_atom: factor must be positive");
  WeightedMeasure c = *this;
  double old_mass = mass_at(m);
  if (is_atoms_) {
    for (auto& [mm, v] : c.atoms_)
      if (mm == m) v *= factor;
    if (c.exact_psi_plus_ && std::isfinite(c.lambda_plus_)) c.bump_exact_psi(old_mass * (factor - 1.0), m);
    return c;
  }
  c.atom_scale_[m] = (c.atom_scale_.count(m) ? c.atom_scale_[m] : 1.0) * factor;
  c.bump_exact_psi(old_mass * (factor - 1.0), m);
  return c;
}

WeightedMeasure WeightedMeasure::with_added_mass(std::int64_t m, double delta) const {
  if (!(delta >= 0)) throw BadParameter("with_added_mass: delta must be >= 0");
  WeightedMeasure c = *this;
  if (is_atoms_) {
    bool found = false;
    for (auto& [mm, v] : c.atoms_)
      if (mm == m) {
        v += delta;
        found = true;
      }
    if (!found && delta > 0) {
      c.atoms_.emplace_back(m, delta);
      std::sort(c.atoms_.begin(), c.atoms_.end());
    }
    c.bump_exact_psi(delta, m);
    return c;
  }
  c.atom_add_[m] += delta;
  c.bump_exact_psi(delta, m);
  return c;
}

WeightedMeasure WeightedMeasure::with_prefix_scaled(std::int64_t m_max, double factor) const {
  if (!(factor > 0)) throw BadParameter("with_prefix_scaled: factor must be positive");
  if (m_max > 1000000) throw BadParameter("with_prefix_scaled: prefix too large");
  WeightedMeasure c = *this;
  if (is_atoms_) {
    double delta_sum_exact = 0.0;  // handled atom by atom below
    for (auto& [mm, v] : c.atoms_)
      if (mm <= m_max) {
        delta_sum_exact += v * (factor - 1.0) * std::exp(c.lambda_plus_ * double(mm));
        v *= factor;
      }
    if (c.exact_psi_plus_ && std::isfinite(c.lambda_plus_)) {
      double nv = std::exp(*c.exact_psi_plus_) + delta_sum_exact;
      if (nv > 0)
        c.exact_psi_plus_ = std::log(nv);
      else
        c.exact_psi_plus_.reset();
    }
    return c;
  }
  if (c.prefix_below_ != 0 && c.prefix_below_ != m_max)
    throw BadParameter("with_prefix_scaled: only one prefix window supported");
  double delta = 0.0;
  if (c.exact_psi_plus_ && std::isfinite(c.lambda_plus_)) {
    for (std::int64_t m = 1; m <= m_max; ++m) {
      double lm = patched_log_mass(m);
      if (lm != -kInf) delta += std::exp(lm) * (factor - 1.0) * std::exp(lambda_plus_ * double(m));
    }
  }
  c.prefix_below_ = m_max;
  c.prefix_factor_ *= factor;
  if (c.exact_psi_plus_) {
    double nv = std::exp(*c.exact_psi_plus_) + delta;
    if (nv > 0 && std::isfinite(nv))
      c.exact_psi_plus_ = std::log(nv);
    else
      c.exact_psi_plus_.reset();
  }
  return c;
}

std::optional<double> WeightedMeasure::exact_psi_at(double lambda) const {
  if (exact_psi_plus_ && lambda == lambda_plus_) return exact_psi_plus_;
  return std::nullopt;
}

const std::vector<std::pair<std::int64_t, double>>& WeightedMeasure::atoms() const {
  if (!is_atoms_) throw PreconditionError("atoms(): analytic measure");
  return atoms_;
}

SumBracket WeightedMeasure::moment_bracket(int k, double lambda) const {
  if (k < 0 || k > 2) throw PreconditionError("moment_bracket: k in {0,1,2}");
  SumBracket out;
  if (lambda > lambda_plus_) {
    out.lo = out.hi = ExtReal::infinity();
    out.certified = true;
    return out;
  }
  if (is_atoms_) {
    LogSum s;
    for (const auto& [m, v] : atoms_)
      s.add(std::log(v) + double(k) * std::log(double(m)) + lambda * double(m));
    ExtReal v = s.log() == -kInf ? ExtReal::zero() : ExtReal::from_log(s.log());
    out.lo = out.hi = v;
    out.certified = true;
    return out;
  }

  std::int64_t N = std::max<std::int64_t>(64, patch_ceiling());
  bool have = false;
  SumBracket best;
  double partial = -kInf;
  while (true) {
    LogSum s;
    for (std::int64_t m = support_stride_; m <= N; m += support_stride_) {
      double lm = patched_log_mass(m);
      if (lm != -kInf) s.add(lm + double(k) * std::log(double(m)) + lambda * double(m));
    }
    // patches may sit off the stride grid
    for (const auto& [m, v] : atom_add_)
      if (m % support_stride_ != 0 && m <= N)
        s.add(std::log(v) + double(k) * std::log(double(m)) + lambda * double(m));
    partial = s.log();
    LogTail t = base_log_tail_(N, lambda, k);
    t.log_lo += global_log_scale_;
    t.log_hi += global_log_scale_;
    if (t.divergent) {
      out.lo = out.hi = ExtReal::infinity();
      out.certified = true;
      return out;
    }
    if (std::isfinite(t.log_hi) || t.log_hi == -kInf) {
      double lo_log = t.log_lo == -kInf ? partial : log_add_exp(partial, t.log_lo);
      double hi_log = t.log_hi == -kInf ? partial : log_add_exp(partial, t.log_hi);
      best.lo = lo_log == -kInf ? ExtReal::zero() : ExtReal::from_log(lo_log);
      best.hi = hi_log == -kInf ? ExtReal::zero() : ExtReal::from_log(hi_log);
      best.certified = true;
      have = true;
      if (hi_log - lo_log <= kLogRelGoal) return best;
    }
    if (N >= kTailCap) break;
    N *= 2;
  }
  if (have) return best;
  out.lo = partial == -kInf ? ExtReal::zero() : ExtReal::from_log(partial);
  out.hi = ExtReal::infinity();
  out.certified = false;
  out.heuristic_divergent = partial > kLogHeuristicDivergence;
  return out;
}

ValueBracket WeightedMeasure::psi_bracket(double lambda) const {
  if (auto e = exact_psi_at(lambda)) return {*e, *e, true};
  if (!is_atoms_ && closed_psi_ && lambda <= lambda_plus_) {
    // closed form for the base measure, finite patch corrections on top
    double phi = std::exp((*closed_psi_)(lambda) + global_log_scale_);
    if (std::isfinite(phi)) {
      double corr = 0.0;
      auto base_mass = [&](std::int64_t m) {
        return std::exp(base_log_mass_(m) + global_log_scale_);
      };
      if (prefix_below_ > 0)
        for (std::int64_t m = 1; m <= prefix_below_; ++m)
          corr += base_mass(m) * (prefix_factor_ - 1.0) * std::exp(lambda * double(m));
      for (const auto& [m, f] : atom_scale_) {
        double b = base_mass(m);
        if (m <= prefix_below_) b *= prefix_factor_;
        corr += b * (f - 1.0) * std::exp(lambda * double(m));
      }
      for (const auto& [m, d] : atom_add_) corr += d * std::exp(lambda * double(m));
      double total = phi + corr;
      if (total > 0) {
        double v = std::log(total);
        return {v - 1e-12, v + 1e-12, true};
      }
    }
  }
  SumBracket s = moment_bracket(0, lambda);
  ValueBracket out;
  out.lo = s.lo.log_or_marker();
  out.hi = s.hi.log_or_marker();
  out.certified = s.certified;
  return out;
}

double psi(const WeightedMeasure& mu, double lambda) {
  ValueBracket b = mu.psi_bracket(lambda);
  if (b.is_infinite()) return kInf;
  if (std::isinf(b.hi)) return b.lo;
  return b.mid();
}

TiltedMeasure tilt(const WeightedMeasure& mu, double lambda) {
  if (lambda > mu.lambda_plus()) throw OutsideDomain("tilt: lambda beyond lambda_plus");
  double p = psi(mu, lambda);
  if (std::isinf(p)) throw OutsideDomain("tilt: psi(lambda) infinite");
  return {mu, lambda, p};
}

std::pair<double, double> psi_derivatives(const WeightedMeasure& mu, double lambda) {
  if (!(lambda < mu.lambda_plus()))
    throw OutsideDomain("psi_derivatives: lambda must be interior to the domain");
  SumBracket s0 = mu.moment_bracket(0, lambda);
  SumBracket s1 = mu.moment_bracket(1, lambda);
  SumBracket s2 = mu.moment_bracket(2, lambda);
  if (s0.lo.is_inf() || s1.hi.is_inf() || s2.hi.is_inf())
    throw OutsideDomain("psi_derivatives: moments not finite at lambda");
  double l0 = 0.5 * (s0.lo.log_value() + s0.hi.log_value());
  double l1 = 0.5 * (s1.lo.log_value() + s1.hi.log_value());
  double l2 = 0.5 * (s2.lo.log_value() + s2.hi.log_value());
  double mean = std::exp(l1 - l0);
  double second = std::exp(l2 - l0);
  double var = std::max(0.0, second - mean * mean);
  return {mean, var};
}

ValueBracket tilted_mean_bracket(const WeightedMeasure& mu, double lambda) {
  SumBracket s0 = mu.moment_bracket(0, lambda);
  SumBracket s1 = mu.moment_bracket(1, lambda);
  if (s0.lo.is_inf()) throw OutsideDomain("tilted_mean_bracket: psi(lambda) infinite");
  if (s1.certified && s1.lo.is_inf()) return {kInf, kInf, true};
  ValueBracket out;
  out.certified = s0.certified && s1.certified && !s1.hi.is_inf();
  out.lo = s1.lo.is_zero() ? 0.0 : std::exp(s1.lo.log_value() - s0.hi.log_value());
  out.hi = s1.hi.is_inf() ? kInf : std::exp(s1.hi.log_value() - s0.lo.log_value());
  return out;
}

ValueBracket boundary_left_derivative(const WeightedMeasure& mu) {
  double lp = mu.lambda_plus();
  if (!std::isfinite(lp))
    throw BoundaryNotFinite("boundary_left_derivative: lambda_plus is infinite");
  ValueBracket pb = mu.psi_bracket(lp);
  if (pb.is_infinite()) throw BoundaryNotFinite("boundary_left_derivative: psi(lambda_plus) infinite");
  return tilted_mean_bracket(mu, lp);
}

}  // namespace rpos::logmgf
