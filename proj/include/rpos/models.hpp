#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rpos/core.hpp"
#include "rpos/htransform.hpp"

namespace rpos::models {

struct ModelSpec {
  enum class Family { Srw, Pinning, FiniteRandom, BirthDeath };
  Family family = Family::Srw;
  double p = 0.5;      // srw / birth_death
  double alpha = 1.5;  // pinning
  double gamma = 0.5;
  std::optional<double> beta;
  std::optional<double> beta_over_bc;
  std::uint64_t seed = 1;  // finite_random
  int size = 4;
  double density = 0.5;
  bool htransformed = false;  // srw / pinning: build the Doob transform
};

// Deterministic uniform in (0, 1] from raw generator bits; stable across
// platforms, unlike std::uniform_real_distribution.
double u01_closed(std::uint64_t bits);
std::uint64_t splitmix64(std::uint64_t x);

// Simple random walk on Z: A(x, x+1) = p, A(x, x-1) = 1-p. Analytic
// excursion law at the root 0 via the Catalan first-return series,
//   phi_0(lambda) = 1 - sqrt(1 - 4 p (1-p) e^(2 lambda)).
StateGenerator srw(double p);

// srw with A(0,1) and A(0,-1) scaled by the same factor (the "window at the
// origin" used by the essential-radius sweep): excursion mass scales by
// factor outright.
StateGenerator srw_with_root_out_scaled(double p, double factor);

// srw with only A(0,1) scaled: both excursion orientations carry equal mass,
// so the law scales by (1 + factor) / 2.
StateGenerator srw_with_origin_up_scaled(double p, double factor);

struct PinningModel {
  StateGenerator gen;
  double alpha = 0.0, gamma = 0.0, beta = 0.0;
  RealBracket beta_c;                // certified bracket
  std::optional<double> beta_ratio;  // exact beta / beta_c when ratio-built
};

// Age chain of the pinning model: A(n, n+1) = 1, A(n, 0) = beta K(n+1) with
// K(m) = m^(-alpha) e^(-gamma m) / Z. Exposes beta_c = Z / zeta(alpha).
PinningModel pinning(double alpha, double gamma, double beta);
// Same chain with beta = ratio * beta_c held as an exact model-level fact,
// which is what certifies the boundary equalities at criticality.
PinningModel pinning_with_ratio(double alpha, double gamma, double ratio);

// Return weights A(j, 0) for j <= j_max scaled by factor.
StateGenerator pinning_with_returns_scaled(const PinningModel& m, std::int64_t j_max,
                                           double factor);
// A(0,0) increased by delta (the rtrans_test direction).
StateGenerator pinning_with_return_added(const PinningModel& m, double delta);

// Doob transforms with analytic bookkeeping. The srw transform is the
// symmetric walk for every p; the pinning transform is the positive
// recurrent age chain of the localized regime (requires beta > beta_c).
htransform::ProbKernel srw_htransform(double p);
htransform::ProbKernel pinning_htransform(const PinningModel& m, double tol = 1e-13);

// Reproducible irreducible matrix: support sampled at the given density,
// weights uniform in (0,1]; rejection until strongly connected, then a cycle
// is added as a last resort.
SparseNonnegMatrix finite_random(std::uint64_t seed, int size, double density);

// Exact per-length excursion weights by depth-first walk enumeration,
// avoiding F-interior vertices and F-edges. out[m-1] = total weight of
// excursions of length m. The brute-force oracle for the elimination engine.
std::vector<double> enumerate_excursions(const SparseNonnegMatrix& a, const Subgraph& f,
                                         const std::string& x, const std::string& y,
                                         int max_len);

// Certified log-bound on the enumeration remainder
//   sum_{m > max_len} (excursion weight at length m) e^(lambda m),
// from the interior max row sum; +inf when e^lambda * rowsum >= 1.
double enumeration_tail_log_bound(const SparseNonnegMatrix& a, const Subgraph& f,
                                  const std::string& x, const std::string& y, int max_len,
                                  double lambda);

// A^n(x,x) via repeated squaring in the log domain.
ExtReal dense_power_diag(const SparseNonnegMatrix& a, const std::string& x, std::int64_t n);

// Excursion-length measure of a finite matrix at reference z: mass(m) equals
// the total weight of length-m excursions, computed by interior transfer
// DP, with a row-sum geometric tail bound.
logmgf::WeightedMeasure excursion_length_measure(const SparseNonnegMatrix& a,
                                                 const std::string& z,
                                                 std::int64_t precompute = 4096);

struct BuiltModel {
  std::variant<SparseNonnegMatrix, StateGenerator, htransform::ProbKernel> object;
  std::string describe;
  std::optional<PinningModel> pinning_detail;
};

BuiltModel build(const ModelSpec& spec);

}  // namespace rpos::models
