#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rpos/core.hpp"
#include "rpos/excursion.hpp"
#include "rpos/logmgf.hpp"
#include "rpos/spectral.hpp"

namespace rpos::classify {

enum class Verdict {
  RTransient,
  RNullRecurrent,
  WeaklyRPositive,
  StronglyRPositive,
  Undecided,
};

std::string to_string(Verdict v);

struct Evidence {
  RealBracket rho;
  RealBracket lambda_star;
  excursion::MaybeBracket lambda_plus;
  logmgf::ValueBracket psi_at_lambda_star;  // endpoints may be +/-inf
  logmgf::ValueBracket left_derivative;     // mean excursion length at the critical tilt
  std::optional<RealBracket> lambda_gap;    // lambda_plus - lambda_star when both finite
};

// Four-way classification with supporting evidence. Equalities (psi = 0 at
// the boundary, lambda_star = lambda_plus) are only asserted when an analytic
// or tail-bounded evaluation certifies them; truncation-only inputs come back
// undecided with whatever one-sided bounds were obtained.
struct Classification {
  Verdict verdict = Verdict::Undecided;
  bool certified = false;
  Evidence evidence;
};

Classification classify(const SpectralInput& in, const std::string& z, double tol);

struct PerturbationReport {
  RealBracket rho_a;
  RealBracket rho_b;
  std::vector<std::pair<std::string, std::string>> changed;
  std::string conclusion;
  bool certified_drop = false;
  bool certified_equal = false;
  double drop_lower_bound = 0.0;        // certified when certified_drop
  std::optional<double> epsilon;        // largest eps with rho(A + eps(B-A)) = rho(A)
};

// eps -> A + eps (B - A), supplied by the model layer for generator inputs.
using Mixer = std::function<SpectralInput(double)>;

// Perturbation test for strong R-positivity: B <= A, same support, B != A,
// finite difference set. A certified rho drop proves strong R-positivity; a
// certified equality proves its absence.
PerturbationReport strong_rpos_test(const SpectralInput& a, const SpectralInput& b, double tol);

// Complementary transience test: A <= B, B != A, rho(B) < inf. Certified
// rho(B) = rho(A) proves R-transience; for a certified R-transient A the
// eps-search looks for the largest eps in {1, 1/2, ...} keeping rho fixed.
PerturbationReport rtrans_test(const SpectralInput& a, const SpectralInput& b, double tol,
                               Mixer mixer = {});

struct EssentialRadiusEstimate {
  Subgraph window;
  double value = 0.0;  // min over the sweep of certified rho upper bounds
  std::vector<std::pair<double, RealBracket>> sweep;
  bool monotone_nonincreasing = true;  // trend as delta decreases
};

// Upper bounds on the essential spectral radius relative to a finite window:
// window entries are scaled by each delta (positivity kept) and rho of the
// modified input is bracketed.
EssentialRadiusEstimate essential_radius(const SpectralInput& a, const Subgraph& window,
                                         const std::vector<double>& delta_grid,
                                         double tol = 1e-9);

// Self-test of the subgraph invariance of positive exponential moments for a
// finite irreducible subprobability kernel: the condition
//   lambda^F_{x,y,+} > 0 for all x,y in F cap S
// must hold for both subgraphs or for neither.
bool exp_moment_invariance_check(const SparseNonnegMatrix& p, const Subgraph& f1,
                                 const Subgraph& f2);

}  // namespace rpos::classify
