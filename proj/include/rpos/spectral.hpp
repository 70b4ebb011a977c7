#pragma once

#include <map>
#include <string>

#include "rpos/core.hpp"
#include "rpos/excursion.hpp"

namespace rpos::spectral {

struct SpectralEstimate {
  RealBracket rho;  // certified [lower, upper]
  std::string lower_method;
  std::string upper_method;
  bool certified = true;
  // geometric-mean point estimate
  double point() const;
};

// (A^n(x,x))^(1/n), a lower bound on rho(A). n must hit the period.
double rho_lower(const SparseNonnegMatrix& a, const std::string& x, std::int64_t n);

struct UpperCheck {
  bool verified = false;
  std::string violating_state;  // set when not verified
  double max_ratio = 0.0;       // max over states of (Ah)(x) / h(x)
};

// Verifies A h <= c h entrywise; when it holds, c is a certified upper bound
// on rho(A).
UpperCheck rho_upper(const SparseNonnegMatrix& a, const std::map<std::string, double>& h,
                     double c);

// Bisection on the sign of psi_z. Finite matrices run on exact elimination
// values; generators with an analytic law on certified series brackets;
// black-box generators yield a certified lower bound with an uncertified
// upper end.
SpectralEstimate rho_bisect(const SpectralInput& in, const std::string& z, double tol);

struct GreenValue {
  double lambda = 0.0;
  std::string x, y;
  ExtReal value;
  bool diagonal_checked = false;  // diagonal identity against psi_z held to 1e-8
};

// G_lambda(x,y) = sum_k e^(lambda k) A^k(x,y). Finite matrices: linear solve
// when e^lambda rho(A) < 1, +inf otherwise. Generators need analytic support.
GreenValue green(const SpectralInput& in, double lambda, const std::string& x,
                 const std::string& y);

// Column x -> G_lambda(x, z) of a finite matrix, by one LU solve plus
// iterative refinement. Throws Divergent when e^lambda rho(A) >= 1.
std::vector<double> green_column(const SparseNonnegMatrix& a, double lambda,
                                 const std::string& z);

// rho of a possibly reducible nonnegative matrix given as explicit triples:
// max of rho over nontrivial strongly connected components, 0 if acyclic.
double reducible_rho_upper(const std::vector<std::tuple<std::string, std::string, double>>& t,
                           double tol);

}  // namespace rpos::spectral
