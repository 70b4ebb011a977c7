#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rpos/errors.hpp"
#include "rpos/models.hpp"
#include "rpos/spectral.hpp"
#include "test_util.hpp"

using namespace rpos;
using namespace rpos::spectral;

TEST_CASE("rho_lower basics") {
  SparseNonnegMatrix loop = build_matrix({{"a", "a", 2.0}});
  CHECK(rho_lower(loop, "a", 5) == doctest::Approx(2.0).epsilon(1e-14));

  SparseNonnegMatrix cyc = build_matrix({{"a", "b", 1.0}, {"b", "a", 1.0}});
  CHECK(rho_lower(cyc, "a", 2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(rho_lower(cyc, "a", 3), ZeroDiagonalPower);
}

TEST_CASE("rho_lower on the truncated srw matches the binomial oracle") {
  double p = 0.3, q = 0.7;
  SparseNonnegMatrix t = truncate(models::srw(p), 200);
  // A^(2n)(0,0) = C(2n,n) p^n q^n on Z; window effects only shave
  // exponentially little at 2n = 2000
  long n2 = 2000;
  double lg_oracle = std::lgamma(double(n2 + 1)) - 2.0 * std::lgamma(double(n2 / 2 + 1)) +
                     double(n2 / 2) * (std::log(p) + std::log(q));
  double oracle_root = std::exp(lg_oracle / double(n2));
  double got = rho_lower(t, "0", n2);
  CHECK(got == doctest::Approx(oracle_root).epsilon(1e-6));
  CHECK(got <= 2.0 * std::sqrt(p * q));
  CHECK(got >= 2.0 * std::sqrt(p * q) - 2e-3);
  // a longer power closes the gap below 1e-3
  double better = rho_lower(t, "0", 6000);
  CHECK(better >= 2.0 * std::sqrt(p * q) - 1e-3);
}

TEST_CASE("rho_upper verifies test functions") {
  SparseNonnegMatrix loop = build_matrix({{"a", "a", 2.0}});
  CHECK(rho_upper(loop, {{"a", 1.0}}, 2.0).verified);
  CHECK_FALSE(rho_upper(loop, {{"a", 1.0}}, 1.9).verified);

  SparseNonnegMatrix cyc = build_matrix({{"a", "b", 1.0}, {"b", "a", 1.0}});
  CHECK(rho_upper(cyc, {{"a", 1.0}, {"b", 1.0}}, 1.0).verified);

  // srw window with h(x) = (q/p)^(x/2): equality inside, slack at the ends
  double p = 0.3, q = 0.7;
  SparseNonnegMatrix t = truncate(models::srw(p), 60);
  std::map<std::string, double> h;
  for (const auto& s : t.labels()) h[s] = std::pow(q / p, std::stod(s) / 2.0);
  UpperCheck chk = rho_upper(t, h, 2.0 * std::sqrt(p * q) * (1.0 + 1e-12));
  CHECK(chk.verified);
  CHECK(chk.max_ratio == doctest::Approx(2.0 * std::sqrt(p * q)).epsilon(1e-12));

  UpperCheck bad = rho_upper(t, h, 2.0 * std::sqrt(p * q) * 0.999);
  CHECK_FALSE(bad.verified);
  CHECK_FALSE(bad.violating_state.empty());
}

TEST_CASE("rho_bisect examples") {
  SparseNonnegMatrix loop = build_matrix({{"z", "z", 0.6}});
  SpectralEstimate e1 = rho_bisect(loop, "z", 1e-10);
  CHECK(e1.rho.lo <= 0.6);
  CHECK(e1.rho.hi >= 0.6);
  CHECK(e1.rho.width() <= 1e-10);

  SparseNonnegMatrix ones =
      build_matrix({{"a", "a", 1}, {"a", "b", 1}, {"b", "a", 1}, {"b", "b", 1}});
  SpectralEstimate e2 = rho_bisect(ones, "a", 1e-10);
  CHECK(e2.rho.lo <= 2.0);
  CHECK(e2.rho.hi >= 2.0);
  CHECK(e2.rho.width() <= 1e-10);

  SparseNonnegMatrix m =
      build_matrix({{"a", "a", 0.5}, {"a", "b", 1}, {"b", "a", 1}, {"b", "b", 1}});
  double oracle = testutil::largest_eig_2x2(0.5, 1, 1, 1);  // (1.5 + sqrt(4.25))/2
  CHECK(oracle == doctest::Approx(1.78077640640442).epsilon(1e-12));
  SpectralEstimate e3 = rho_bisect(m, "b", 1e-9);
  CHECK(e3.rho.lo <= oracle + 1e-12);
  CHECK(e3.rho.hi >= oracle - 1e-12);
  CHECK(e3.point() == doctest::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("rho_bisect is reference-vertex independent") {
  for (std::uint64_t seed : {7, 19, 33}) {
    SparseNonnegMatrix a = models::finite_random(seed, 6, 0.5);
    SpectralEstimate first = rho_bisect(a, a.labels()[0], 1e-10);
    for (const auto& z : a.labels()) {
      SpectralEstimate est = rho_bisect(a, z, 1e-10);
      CHECK(std::fabs(est.point() - first.point()) <= 1e-8);
    }
  }
}

TEST_CASE("sandwich: rho_lower <= bisect estimate <= verified upper") {
  for (std::uint64_t seed : {2, 11, 29}) {
    SparseNonnegMatrix a = models::finite_random(seed, 5, 0.6);
    SpectralEstimate est = rho_bisect(a, a.labels()[0], 1e-10);
    int d = a.period();
    double lower = rho_lower(a, a.labels()[0], 12 * d);
    CHECK(lower <= est.rho.hi + 1e-12);
    // row sums always verify as an upper bound
    std::map<std::string, double> ones;
    for (const auto& s : a.labels()) ones[s] = 1.0;
    double c = a.max_row_sum() * (1 + 1e-13);
    CHECK(rho_upper(a, ones, c).verified);
    CHECK(est.rho.lo <= c);
  }
}

TEST_CASE("entrywise monotonicity of rho") {
  for (std::uint64_t seed : {3, 23}) {
    SparseNonnegMatrix a = models::finite_random(seed, 5, 0.6);
    auto edges = a.support_edges();
    testutil::Rng rng(seed);
    SparseNonnegMatrix b = a;
    for (int k = 0; k < 3; ++k) {
      auto [i, j] = edges[std::size_t(rng.below(std::int64_t(edges.size())))];
      b = b.with_entry_scaled(b.labels()[i], b.labels()[j], 0.5 + 0.4 * rng.u01());
    }
    SpectralEstimate ea = rho_bisect(a, a.labels()[0], 1e-10);
    SpectralEstimate eb = rho_bisect(b, b.labels()[0], 1e-10);
    CHECK(eb.rho.lo <= ea.rho.hi + 1e-12);
  }
}

TEST_CASE("rho_bisect on generators") {
  // analytic: srw p=0.3 contains 2 sqrt(pq)
  SpectralEstimate e = rho_bisect(models::srw(0.3), "0", 1e-8);
  double truth = 2.0 * std::sqrt(0.3 * 0.7);
  CHECK(e.rho.lo <= truth);
  CHECK(e.rho.hi >= truth);
  CHECK(e.rho.width() <= 1e-8);
  CHECK(e.certified);

  // black-box: only a certified lower bound
  models::ModelSpec spec;
  spec.family = models::ModelSpec::Family::BirthDeath;
  spec.p = 0.5;
  models::BuiltModel bm = models::build(spec);
  SpectralEstimate bb = rho_bisect(std::get<StateGenerator>(bm.object), "0", 1e-6);
  CHECK_FALSE(bb.certified);
  CHECK(bb.rho.lo > 0.5);
  CHECK(std::isinf(bb.rho.hi));
}

TEST_CASE("green: geometric series on a loop, divergence beyond the radius") {
  SparseNonnegMatrix loop = build_matrix({{"z", "z", 0.5}});
  for (double lam : {-1.0, -0.1, 0.5}) {
    GreenValue g = green(loop, lam, "z", "z");
    if (std::exp(lam) * 0.5 < 1.0) {
      CHECK(g.value.value() == doctest::Approx(1.0 / (1.0 - 0.5 * std::exp(lam))).epsilon(1e-12));
      CHECK(g.diagonal_checked);
    } else {
      CHECK(g.value.is_inf());
    }
  }
  SparseNonnegMatrix cyc = build_matrix({{"a", "b", 1.0}, {"b", "a", 1.0}});
  CHECK(green(cyc, 0.3, "a", "a").value.is_inf());  // lambda > -log rho = 0
}

TEST_CASE("green diagonal identity against psi (GPrz)") {
  for (std::uint64_t seed : {5, 13, 37, 41}) {
    SparseNonnegMatrix a = models::finite_random(seed, 4, 0.65);
    SpectralEstimate est = rho_bisect(a, a.labels()[0], 1e-12);
    double lam_star = -std::log(est.point());
    for (int k = 1; k <= 10; ++k) {
      double lam = lam_star - 0.05 * double(k);
      const std::string& z = a.labels()[0];
      GreenValue g = green(a, lam, z, z);
      excursion::PsiPoint p = excursion::psi_point_finite(a, z, lam);
      double lhs = g.value.value() * (-std::expm1(p.value.mid()));
      CHECK(std::fabs(lhs - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("green on an analytic generator diagonal") {
  StateGenerator g = models::srw(0.4);
  double lam = -0.4;  // below lambda_star
  GreenValue gv = green(g, lam, "0", "0");
  double r = 4.0 * 0.4 * 0.6 * std::exp(2.0 * lam);
  double phi = 1.0 - std::sqrt(1.0 - r);
  CHECK(gv.value.value() == doctest::Approx(1.0 / (1.0 - phi)).epsilon(1e-10));
  CHECK(green(g, 0.2, "0", "0").value.is_inf());
}

TEST_CASE("green_column solves the whole column at once") {
  SparseNonnegMatrix a = models::finite_random(9, 5, 0.6);
  SpectralEstimate est = rho_bisect(a, a.labels()[0], 1e-12);
  double lam = -std::log(est.point()) - 0.4;
  const std::string z = a.labels()[2];
  std::vector<double> col = green_column(a, lam, z);
  for (std::size_t i = 0; i < a.size(); ++i) {
    GreenValue g = green(a, lam, a.label_of(StateId(i)), z);
    CHECK(col[i] == doctest::Approx(g.value.value()).epsilon(1e-12));
    CHECK(col[i] > 0.0);
  }
  CHECK_THROWS_AS(green_column(a, 1.0, z), Divergent);
}

TEST_CASE("reducible_rho_upper: max over components, zero when acyclic") {
  // two separate cycles with different weights
  std::vector<std::tuple<std::string, std::string, double>> t = {
      {"a", "b", 2.0}, {"b", "a", 2.0},  // rho 2
      {"c", "c", 3.0},                   // rho 3
      {"a", "c", 1.0},                   // bridge, no cycle through it
  };
  CHECK(reducible_rho_upper(t, 1e-9) == doctest::Approx(3.0).epsilon(1e-8));
  std::vector<std::tuple<std::string, std::string, double>> dag = {{"a", "b", 1.0},
                                                                   {"b", "c", 5.0}};
  CHECK(reducible_rho_upper(dag, 1e-9) == 0.0);
}
