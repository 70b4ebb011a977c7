#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "rpos/extreal.hpp"

namespace rpos::logmgf {

// Certified bracket, in the log domain, of a series remainder
//   sum_{m>N} m^k mu(m) e^{lambda m}.
// log_lo = -inf is always a valid (trivial) lower bound. log_hi = +inf means
// "no certified upper bound at this N" and makes the caller enlarge N;
// divergent means the remainder is provably infinite.
struct LogTail {
  double log_lo;
  double log_hi;
  bool divergent = false;
};

// Enclosure of a nonnegative series value.
struct SumBracket {
  ExtReal lo;
  ExtReal hi;
  bool certified = false;           // hi is a certified bound (or certified divergence)
  bool heuristic_divergent = false; // partial sums blew past 1e12 without a certificate
};

// Enclosure of a log-scale quantity (psi values, tilted means, ...).
// IEEE +/-inf allowed at the endpoints as markers.
struct ValueBracket {
  double lo = 0.0;
  double hi = 0.0;
  bool certified = false;
  double mid() const { return 0.5 * (lo + hi); }
  bool is_infinite() const;
};

// Certified bracket of log Gamma(p, y) = log int_y^inf t^(p-1) e^(-t) dt,
// via the recursion Gamma(p,y) = (p-1)Gamma(p-1,y) + y^(p-1)e^(-y) down to
// p <= 1 where elementary enclosures apply.
RealBracket log_upper_gamma(double p, double y);

// Certified log-bracket of sum_{m>N} m^k * scale * m^(-alpha) e^((lambda-gamma) m)
// by the integral test; log_hi = +inf (not divergent) signals that N is still
// too small for a monotone bound.
LogTail zeta_series_tail(double alpha, double gamma, double log_scale, std::int64_t N,
                         double lambda, int k);

// Nonzero measure on the positive integers. Two representations:
//  - explicit atoms (finite support, all sums exact up to rounding);
//  - analytic: a log-mass function plus a certified tail-bound function,
//    with the finiteness threshold lambda_plus known exactly.
// Local modifications (scaled/added atoms, scaled prefix, global scale) stack
// on top of either representation and keep the certified bookkeeping, in
// particular the exact value of psi at lambda_plus when one is known.
class WeightedMeasure {
 public:
  using LogMassFn = std::function<double(std::int64_t)>;  // -inf when no atom
  using TailFn = std::function<LogTail(std::int64_t N, double lambda, int k)>;
  using ClosedPsiFn = std::function<double(double)>;      // tight psi for lambda <= lambda_plus

  static WeightedMeasure from_atoms(const std::map<std::int64_t, double>& atoms);
  static WeightedMeasure from_atoms(const std::map<std::int64_t, double>& atoms,
                                    double lambda_plus_cap);
  static WeightedMeasure dirac(std::int64_t m, double mass);
  static WeightedMeasure geometric(double ratio);
  // mass(m) = scale * m^(-alpha) * e^(-gamma m)
  static WeightedMeasure zeta_type(double alpha, double gamma, double scale = 1.0);
  static WeightedMeasure analytic(LogMassFn log_mass, TailFn log_tail, double lambda_plus,
                                  std::optional<double> exact_psi_at_plus = std::nullopt,
                                  std::optional<ClosedPsiFn> closed_psi = std::nullopt,
                                  std::int64_t support_stride = 1);

  // Modifiers. Composition order is scale -> prefix -> per-atom scale -> add;
  // do not add mass first and scale globally afterwards.
  WeightedMeasure scaled(double factor) const;
  WeightedMeasure with_scaled_atom(std::int64_t m, double factor) const;
  WeightedMeasure with_added_mass(std::int64_t m, double delta) const;
  WeightedMeasure with_prefix_scaled(std::int64_t m_max, double factor) const;

  double lambda_plus() const { return lambda_plus_; }
  bool atoms_only() const { return is_atoms_; }
  // Exact psi(lambda_plus) when the model provides one (closed-form special value).
  std::optional<double> exact_psi_at(double lambda) const;

  // Mass of a single point (after modifications), linear scale.
  double mass_at(std::int64_t m) const;
  double log_mass_at(std::int64_t m) const;

  // Certified enclosure of  sum_m m^k mu(m) e^(lambda m),  k in {0,1,2}.
  SumBracket moment_bracket(int k, double lambda) const;

  // psi(lambda) = log sum_m mu(m) e^(lambda m), as a certified enclosure.
  ValueBracket psi_bracket(double lambda) const;

  // Atoms accessor (atoms representation only).
  const std::vector<std::pair<std::int64_t, double>>& atoms() const;

 private:
  friend WeightedMeasure patched_copy(const WeightedMeasure&);

  bool is_atoms_ = true;
  std::vector<std::pair<std::int64_t, double>> atoms_;

  LogMassFn base_log_mass_;
  TailFn base_log_tail_;
  std::int64_t support_stride_ = 1;
  std::optional<ClosedPsiFn> closed_psi_;

  double lambda_plus_ = std::numeric_limits<double>::infinity();
  std::optional<double> exact_psi_plus_;

  double global_log_scale_ = 0.0;  // log of global factor
  std::int64_t prefix_below_ = 0;
  double prefix_factor_ = 1.0;
  std::map<std::int64_t, double> atom_scale_;
  std::map<std::int64_t, double> atom_add_;

  std::int64_t patch_ceiling() const;  // smallest N safe for base tails
  double patched_log_mass(std::int64_t m) const;
  void bump_exact_psi(double delta_mass_at_m, std::int64_t m);
};

// psi(lambda) as a point value: bracket midpoint, or +inf marker.
double psi(const WeightedMeasure& mu, double lambda);

struct TiltedMeasure {
  WeightedMeasure base;
  double lambda;
  double normalizer;  // psi(lambda)
};

// Normalized exponential tilt e^(lambda x - psi(lambda)) mu(dx).
TiltedMeasure tilt(const WeightedMeasure& mu, double lambda);

// (psi'(lambda), psi''(lambda)) = (mean, variance) of the tilted measure.
// Requires lambda strictly inside the finiteness domain.
std::pair<double, double> psi_derivatives(const WeightedMeasure& mu, double lambda);

// Certified enclosure of the mean of mu_lambda; endpoints +inf when the first
// moment provably diverges.
ValueBracket tilted_mean_bracket(const WeightedMeasure& mu, double lambda);

// lim_{lambda -> lambda_plus-} psi'(lambda) = mean of mu at the boundary tilt.
// Requires lambda_plus < inf and psi(lambda_plus) < inf.
ValueBracket boundary_left_derivative(const WeightedMeasure& mu);

}  // namespace rpos::logmgf
