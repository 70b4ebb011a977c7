#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rpos/classify.hpp"
#include "rpos/core.hpp"
#include "rpos/spectral.hpp"

namespace rpos::htransform {

struct Eigenpair {
  std::map<std::string, double> h;  // normalized so h(first state) = 1
  double c = 0.0;
  double residual = 0.0;   // ||Ah - ch||_inf / ||h||_inf
  RealBracket cw;          // Collatz-Wielandt bracket around c
};

// Perron-Frobenius eigenpair by power iteration. Periodic supports are
// handled by averaging over `period` consecutive iterates before taking the
// Rayleigh quotient. start_seed 0 starts from all-ones, anything else from a
// reproducible random positive vector.
Eigenpair pf_eigenpair(const SparseNonnegMatrix& a, double tol, std::uint64_t start_seed = 0);

struct KernelValidation {
  double max_rowsum_dev = 0.0;
  double power_identity_dev = 0.0;  // max_n |P^n(x,x) c^n - A^n(x,x)| / A^n(x,x)
};

// Probability kernel, either an explicit finite matrix (with stationary law)
// or a kernel generator (with the stationary mass at the root when positive
// recurrent).
struct ProbKernel {
  SpectralInput base;
  std::string root;
  std::optional<std::map<std::string, double>> pi;
  std::optional<RealBracket> pi_root;
  KernelValidation validation;

  bool finite() const;
  const SparseNonnegMatrix& matrix() const;
  const StateGenerator& generator() const;
  // Row of transition probabilities, normalized to sum exactly 1.
  std::vector<std::pair<std::string, double>> row(const std::string& x) const;
};

// P(x,y) = A(x,y) h(y) / (c h(x)). Validates the eigen relation, the row
// sums, and the identity P^n(x,x) = c^(-n) A^n(x,x) on sampled powers.
ProbKernel doob_transform(const SparseNonnegMatrix& a, const std::map<std::string, double>& h,
                          double c, double tol = 1e-10);

// Wraps an explicitly stochastic matrix (row sums 1 within 1e-12) as a
// kernel, computing its stationary law.
ProbKernel wrap_stochastic(const SparseNonnegMatrix& a);

// h(x) = G_lambda(x, z), verified to satisfy A h = e^(-lambda) (h - 1_{x=z})
// on the evaluation window; in particular A h <= e^(-lambda) h.
std::map<std::string, double> excessive_function(const SpectralInput& in, const std::string& z,
                                                 double lambda, std::int64_t window = 64);

// h = sum_{z in S'} G_{lambda_star}(., z) for a certified R-transient input;
// A h <= rho(A) h everywhere on the window, strictly on S'.
std::map<std::string, double> strictly_excessive(const SpectralInput& in,
                                                 const std::set<std::string>& sprime,
                                                 std::int64_t window = 64);

struct LyapunovCertificate {
  std::map<std::string, double> f;  // positive on the verification window
  double epsilon = 0.0;             // in (0,1)
  std::set<std::string> sprime;
  RealBracket rho_q;
  std::pair<std::string, std::string> halved_entry;
  std::int64_t window = 0;
};

// Drift certificate per the halved-entry construction: Q halves one entry out
// of S', f is a Green's function of Q at a subcritical tilt, and
// epsilon = 0.9 (1 - rho_hi(Q)). Fails cleanly when rho(Q) = 1 within
// brackets, i.e. when P is not strongly positive recurrent.
LyapunovCertificate lyapunov_certificate(const ProbKernel& p, const std::set<std::string>& sprime,
                                         std::int64_t window = 64);

struct CertificateCheck {
  bool ok = false;
  std::string violating_state;
  double min_margin = 0.0;  // min over checked states of (1-eps) f(x) - Pf(x)
};

// Independent re-verification of a certificate by direct inequality
// evaluation; shares no code with the construction above.
CertificateCheck verify_certificate(const ProbKernel& p, const LyapunovCertificate& cert);

struct MomentEstimate {
  double eps = 0.0;
  double estimate = 0.0;         // mean of e^(eps sigma) over uncensored samples
  std::size_t censored_excluded = 0;
};

struct DecayFit {
  double rate = 0.0;      // fitted eps in |P^n(x,x) - pi(x)| ~ M e^(-eps n)
  double rate_stderr = 0.0;
  double log_m = 0.0;
  double r2 = 0.0;
  int period = 1;
  bool valid = false;
};

struct ErgodicityFit {
  std::size_t n_samples = 0;
  std::size_t censored = 0;
  std::int64_t horizon = 0;
  double censor_fraction = 0.0;
  double censor_fraction_half = 0.0;  // censoring at horizon/2, same samples
  bool heavy_tail = false;
  double mean_return = 0.0;  // over uncensored samples
  std::vector<MomentEstimate> moments;
  std::optional<DecayFit> fit;
  std::vector<std::string> flags;
};

// Simulates first returns to x with per-sample RNG streams split
// deterministically from the master seed; censors at the horizon; fits the
// diagonal decay when the stationary mass at x is available. Diagnostics
// only, never a certificate.
ErgodicityFit simulate_returns(const ProbKernel& p, const std::string& x, std::uint64_t seed,
                               std::size_t n_samples, std::int64_t horizon,
                               const std::vector<double>& epsilons = {}, int fit_steps = 200);

}  // namespace rpos::htransform
