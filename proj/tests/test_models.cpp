#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rpos/errors.hpp"
#include "rpos/excursion.hpp"
#include "rpos/models.hpp"
#include "rpos/spectral.hpp"
#include "test_util.hpp"

using namespace rpos;
using namespace rpos::models;

TEST_CASE("srw analytic law matches excursion enumeration on truncations") {
  for (double p : {0.5, 0.35}) {
    StateGenerator g = srw(p);
    SparseNonnegMatrix t = truncate(g, 21);
    std::vector<double> w =
        enumerate_excursions(t, Subgraph::vertices_only({"0"}), "0", "0", 12);
    for (int m = 1; m <= 12; ++m) {
      double expect = g.analytic_excursion_law->mass_at(m);
      if (m % 2 == 1) {
        CHECK(w[std::size_t(m - 1)] == 0.0);
        CHECK(expect == 0.0);
      } else {
        CHECK(w[std::size_t(m - 1)] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
    // analytic phi brackets contain the enumeration partial sums
    for (double lam : {-0.8, -0.3}) {
      double partial = 0.0;
      for (int m = 1; m <= 12; ++m) partial += w[std::size_t(m - 1)] * std::exp(lam * m);
      logmgf::ValueBracket b = g.analytic_excursion_law->psi_bracket(lam);
      CHECK(std::log(partial) <= b.hi + 1e-12);
      CHECK(b.certified);
    }
  }
  CHECK_THROWS_AS(srw(0.0), BadParameter);
  CHECK_THROWS_AS(srw(1.0), BadParameter);
}

TEST_CASE("srw rho is maximal at p = 1/2") {
  double best = 0.0, at_half = 0.0;
  for (double p : {0.2, 0.35, 0.5, 0.65, 0.8}) {
    double rho = spectral::rho_bisect(srw(p), "0", 1e-10).point();
    best = std::max(best, rho);
    if (p == 0.5) at_half = rho;
  }
  CHECK(at_half == doctest::Approx(best));
  CHECK(at_half == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("pinning: beta_c bracket and monotonicity in gamma") {
  double prev = 1e300;
  for (double gamma : {0.25, 0.5, 1.0, 2.0}) {
    PinningModel m = pinning(1.5, gamma, 1.0);
    CHECK(m.beta_c.lo <= m.beta_c.hi);
    CHECK(m.beta_c.width() <= 1e-6 * m.beta_c.lo);
    CHECK(m.beta_c.hi < prev);
    prev = m.beta_c.lo;
  }
  CHECK_THROWS_AS(pinning(1.0, 0.5, 1.0), BadParameter);
  CHECK_THROWS_AS(pinning(1.5, 0.0, 1.0), BadParameter);
  CHECK_THROWS_AS(pinning(1.5, 0.5, 0.0), BadParameter);
}

TEST_CASE("pinning beta_c matches a direct truncated-series oracle") {
  double alpha = 1.5, gamma = 0.5;
  PinningModel m = pinning(alpha, gamma, 1.0);
  long N = 2000000;
  long double z = 0.0L, zeta = 0.0L;
  for (long k = 1; k <= N; ++k) {
    z += std::pow((long double)k, (long double)-alpha) * std::exp(-gamma * (long double)k);
    zeta += std::pow((long double)k, (long double)-alpha);
  }
  zeta += 2.0L / std::sqrt((long double)N);  // integral remainder midpoint
  double oracle = double(z / zeta);
  CHECK(m.beta_c.mid() == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("pinning truncation reproduces the analytic masses and verdicts") {
  PinningModel m = pinning_with_ratio(1.5, 0.5, 2.0);
  SparseNonnegMatrix t = truncate(m.gen, 10);
  std::vector<double> w = enumerate_excursions(t, Subgraph::vertices_only({"0"}), "0", "0", 10);
  for (int len = 1; len <= 10; ++len)
    CHECK(w[std::size_t(len - 1)] ==
          doctest::Approx(m.gen.analytic_excursion_law->mass_at(len)).epsilon(1e-12));

  // truncations give certified lower bounds approaching the analytic rho
  double analytic = spectral::rho_bisect(m.gen, "0", 1e-10).point();
  double prev = 0.0;
  for (std::int64_t window : {8, 16, 32, 64}) {
    double lower = spectral::rho_bisect(truncate(m.gen, window), "0", 1e-10).rho.lo;
    CHECK(lower <= analytic + 1e-9);
    CHECK(lower >= prev - 1e-12);
    prev = lower;
  }
  CHECK(prev >= analytic - 1e-3);
}

TEST_CASE("finite_random: reproducible, irreducible, densify fallback") {
  SparseNonnegMatrix a = finite_random(1, 2, 1.0);
  SparseNonnegMatrix b = finite_random(1, 2, 1.0);
  CHECK(write_matrix_tsv(a) == write_matrix_tsv(b));  // byte-stable

  SparseNonnegMatrix one = finite_random(9, 1, 1.0);
  CHECK(one.size() == 1);
  CHECK(one.has_edge(0, 0));

  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SparseNonnegMatrix m = finite_random(seed, 1 + int(seed % 8), 0.35);
    CHECK(m.size() >= 1);  // construction itself validates irreducibility
  }
}

TEST_CASE("enumerate_excursions basics") {
  SparseNonnegMatrix cyc = build_matrix({{"0", "1", 0.4}, {"1", "0", 0.6}});
  std::vector<double> w = enumerate_excursions(cyc, Subgraph::vertices_only({"0"}), "0", "0", 8);
  CHECK(w[1] == doctest::Approx(0.24));
  for (int m : {1, 3, 4, 5, 6, 7, 8})
    CHECK(w[std::size_t(m - 1)] == 0.0);

  SparseNonnegMatrix loop = build_matrix({{"z", "z", 0.3}});
  std::vector<double> wl =
      enumerate_excursions(loop, Subgraph::vertices_only({"z"}), "z", "z", 4);
  CHECK(wl[0] == doctest::Approx(0.3));
  CHECK(wl[1] == 0.0);

  CHECK_THROWS_AS(enumerate_excursions(loop, Subgraph::vertices_only({"z"}), "z", "z", 21),
                  LimitExceeded);
}

TEST_CASE("enumeration partial sums converge monotonically to the gf value") {
  SparseNonnegMatrix a = finite_random(44, 4, 0.6);
  const std::string z = a.labels()[0];
  Subgraph f = Subgraph::vertices_only({z});
  double lam = -std::log(a.max_row_sum()) - 0.25;
  double value = excursion::excursion_gf(a, f, z, z, lam).value();
  std::vector<double> w = enumerate_excursions(a, f, z, z, 14);
  double s = 0.0, prev = -1.0;
  for (int m = 1; m <= 14; ++m) {
    s += w[std::size_t(m - 1)] * std::exp(lam * m);
    CHECK(s >= prev);
    CHECK(s <= value + 1e-12);
    prev = s;
  }
  double gap = value - s;
  CHECK(gap <= std::exp(enumeration_tail_log_bound(a, f, z, z, 14, lam)) + 1e-12);
}

TEST_CASE("dense_power_diag examples and oracle agreement") {
  SparseNonnegMatrix loop = build_matrix({{"z", "z", 2.0}});
  CHECK(dense_power_diag(loop, "z", 10).value() == doctest::Approx(1024.0));

  SparseNonnegMatrix cyc = build_matrix({{"a", "b", 0.4}, {"b", "a", 0.6}});
  CHECK(dense_power_diag(cyc, "a", 6).value() == doctest::Approx(std::pow(0.24, 3)));
  CHECK(dense_power_diag(cyc, "a", 5).is_zero());

  SparseNonnegMatrix r = finite_random(7, 3, 0.8);
  for (int n = 1; n <= 6; ++n) {
    double oracle = testutil::walk_sum(r, 0, 0, n);
    ExtReal got = dense_power_diag(r, r.labels()[0], n);
    if (oracle == 0.0)
      CHECK(got.is_zero());
    else
      CHECK(got.value() == doctest::Approx(oracle).epsilon(1e-11));
  }
  // large n stays finite in the log domain
  ExtReal big = dense_power_diag(loop, "z", std::int64_t(1) << 20);
  CHECK(big.log_value() == doctest::Approx(double(std::int64_t(1) << 20) * std::log(2.0)));
}

TEST_CASE("srw_htransform is the symmetric walk for every drift") {
  for (double p : {0.5, 0.25}) {
    htransform::ProbKernel k = srw_htransform(p);
    auto row = k.row("0");
    REQUIRE(row.size() == 2);
    CHECK(row[0].second == doctest::Approx(0.5));
    CHECK(row[1].second == doctest::Approx(0.5));
    CHECK_FALSE(k.pi_root.has_value());  // null recurrent
  }
}

TEST_CASE("pinning_htransform: rows, stationary mass, power identity") {
  PinningModel m = pinning_with_ratio(1.5, 0.5, 2.0);
  htransform::ProbKernel k = pinning_htransform(m);
  CHECK(k.validation.max_rowsum_dev <= 1e-12);
  CHECK(k.validation.power_identity_dev <= 1e-9);
  REQUIRE(k.pi_root.has_value());
  // pi(0) = 1/E[sigma] and E[sigma] = sum m mass_P(m)
  logmgf::SumBracket mean = k.generator().analytic_excursion_law->moment_bracket(1, 0.0);
  CHECK(k.pi_root->mid() ==
        doctest::Approx(1.0 / std::exp(mean.lo.log_value())).epsilon(1e-9));
  CHECK(k.pi_root->mid() > 0.3);  // short returns dominate in the localized phase

  // the transformed excursion law is a probability measure
  logmgf::SumBracket mass = k.generator().analytic_excursion_law->moment_bracket(0, 0.0);
  CHECK(std::exp(mass.lo.log_value()) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(pinning_htransform(pinning_with_ratio(1.5, 0.5, 0.8)), PreconditionError);
}

TEST_CASE("model spec builder covers the four families") {
  ModelSpec s;
  s.family = ModelSpec::Family::Srw;
  s.p = 0.4;
  CHECK(std::holds_alternative<StateGenerator>(build(s).object));
  s.htransformed = true;
  CHECK(std::holds_alternative<htransform::ProbKernel>(build(s).object));

  ModelSpec pin;
  pin.family = ModelSpec::Family::Pinning;
  pin.alpha = 1.5;
  pin.gamma = 0.5;
  pin.beta_over_bc = 2.0;
  BuiltModel bm = build(pin);
  CHECK(bm.pinning_detail.has_value());

  ModelSpec fr;
  fr.family = ModelSpec::Family::FiniteRandom;
  fr.seed = 7;
  fr.size = 6;
  fr.density = 0.5;
  CHECK(std::holds_alternative<SparseNonnegMatrix>(build(fr).object));

  ModelSpec bd;
  bd.family = ModelSpec::Family::BirthDeath;
  bd.p = 0.5;
  BuiltModel bdm = build(bd);
  const auto& g = std::get<StateGenerator>(bdm.object);
  CHECK_FALSE(g.analytic_excursion_law.has_value());
  CHECK(truncate(g, 6).period() == 2);
}
