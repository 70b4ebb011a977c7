#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rpos/core.hpp"
#include "rpos/errors.hpp"
#include "rpos/models.hpp"
#include "test_util.hpp"

using namespace rpos;

namespace {
SparseNonnegMatrix two_cycle(double p = 1.0, double q = 1.0) {
  return build_matrix({{"a", "b", p}, {"b", "a", q}});
}
}  // namespace

TEST_CASE("build_matrix basic shapes and period") {
  SparseNonnegMatrix c = two_cycle();
  CHECK(c.size() == 2);
  CHECK(c.period() == 2);

  SparseNonnegMatrix loop = build_matrix({{"a", "a", 2.0}});
  CHECK(loop.size() == 1);
  CHECK(loop.period() == 1);
  CHECK(loop.entry(0, 0) == doctest::Approx(2.0));

  CHECK_THROWS_AS(build_matrix({{"a", "b", 1.0}}), NotIrreducible);
  CHECK_THROWS_AS(build_matrix({{"a", "a", 0.0}}), NonpositiveWeight);
  CHECK_THROWS_AS(build_matrix({{"a", "a", -1.0}}), NonpositiveWeight);
  CHECK_THROWS_AS(build_matrix({{"a", "a", 1.0}, {"a", "a", 2.0}}), PreconditionError);
  CHECK_THROWS_AS(build_matrix({{"a", "a", 1.0}, {"b", "b", 1.0}}), NotIrreducible);
}

TEST_CASE("period matches positivity pattern of diagonal powers") {
  SparseNonnegMatrix c = two_cycle(0.3, 0.7);
  for (int n = 1; n <= 8; ++n) {
    double lg = log_dense_power_diag(c, 0, n);
    if (n % 2 == 0)
      CHECK(lg > -1e300);
    else
      CHECK(lg == -std::numeric_limits<double>::infinity());
  }
  // three-cycle has period 3
  SparseNonnegMatrix c3 = build_matrix({{"a", "b", 1}, {"b", "c", 1}, {"c", "a", 1}});
  CHECK(c3.period() == 3);
  // adding a loop makes it aperiodic
  SparseNonnegMatrix c3l =
      build_matrix({{"a", "b", 1}, {"b", "c", 1}, {"c", "a", 1}, {"a", "a", 1}});
  CHECK(c3l.period() == 1);
}

TEST_CASE("walk_weight examples") {
  SparseNonnegMatrix c = build_matrix({{"a", "b", 2.0}, {"b", "a", 3.0}});
  CHECK(walk_weight(c, {{"a"}}).value() == doctest::Approx(1.0));  // empty product
  CHECK(walk_weight(c, {{"a", "b", "a"}}).value() == doctest::Approx(6.0));
  CHECK_THROWS_AS(walk_weight(c, {{"a", "a"}}), EdgeNotInSupport);
}

TEST_CASE("walk_weight sums reproduce dense matrix powers") {
  SparseNonnegMatrix a = models::finite_random(3, 3, 0.7);
  testutil::Dense d = testutil::to_dense(a);
  for (int n = 0; n <= 6; ++n) {
    testutil::Dense p = testutil::matpow(d, n);
    for (std::size_t x = 0; x < a.size(); ++x)
      for (std::size_t y = 0; y < a.size(); ++y) {
        double ws = testutil::walk_sum(a, StateId(x), StateId(y), n);
        CHECK(ws == doctest::Approx(p[x][y]).epsilon(1e-12));
      }
  }
}

TEST_CASE("walk_weight multiplicativity under concatenation") {
  SparseNonnegMatrix a = models::finite_random(11, 4, 0.8);
  testutil::Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    // random walk of length 6 from state 0, split at position 3
    Walk w;
    StateId cur = 0;
    w.vertices.push_back(a.label_of(cur));
    for (int k = 0; k < 6; ++k) {
      const auto& row = a.row(cur);
      cur = row[std::size_t(rng.below(std::int64_t(row.size())))].first;
      w.vertices.push_back(a.label_of(cur));
    }
    Walk w1{{w.vertices.begin(), w.vertices.begin() + 4}};
    Walk w2{{w.vertices.begin() + 3, w.vertices.end()}};
    double lhs = walk_weight(a, w).value();
    double rhs = walk_weight(a, w1).value() * walk_weight(a, w2).value();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("irreducibility: every pair reachable within |S| steps") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    SparseNonnegMatrix a = models::finite_random(seed, 6, 0.3);
    std::size_t n = a.size();
    testutil::Dense d = testutil::to_dense(a);
    testutil::Dense reach = d;
    testutil::Dense acc = d;
    for (std::size_t k = 1; k < n; ++k) {
      acc = testutil::matmul(acc, d);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) reach[i][j] += acc[i][j];
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(reach[i][j] > 0.0);
  }
}

TEST_CASE("truncate: srw window is a path around the origin") {
  StateGenerator g = models::srw(0.5);
  SparseNonnegMatrix t = truncate(g, 5);  // states 0,1,-1,2,-2
  CHECK(t.size() == 5);
  for (const auto& s : {"-2", "-1", "0", "1", "2"}) CHECK(t.has_state(s));
  CHECK(t.period() == 2);
  CHECK(t.entry(t.index_of("0"), t.index_of("1")) == doctest::Approx(0.5));
  CHECK_FALSE(t.has_edge(t.index_of("2"), t.index_of("1")) == false);  // 2 -> 1 present
  CHECK_THROWS_AS(truncate(g, 1), EmptyComponent);
}

TEST_CASE("truncate monotonicity: smaller window edges survive in larger") {
  StateGenerator g = models::srw(0.3);
  SparseNonnegMatrix small = truncate(g, 7);
  SparseNonnegMatrix big = truncate(g, 13);
  for (auto& [i, j] : small.support_edges()) {
    StateId bi = big.index_of(small.label_of(i));
    StateId bj = big.index_of(small.label_of(j));
    CHECK(big.has_edge(bi, bj));
    CHECK(big.entry(bi, bj) == doctest::Approx(small.entry(i, j)));
  }
}

TEST_CASE("truncate: pinning window contains all short excursions") {
  models::PinningModel pm = models::pinning(1.5, 0.5, 0.2);
  SparseNonnegMatrix t = truncate(pm.gen, 10);
  std::vector<double> w =
      models::enumerate_excursions(t, Subgraph::vertices_only({"0"}), "0", "0", 10);
  for (int m = 1; m <= 10; ++m) {
    double expect = pm.gen.analytic_excursion_law->mass_at(m);
    CHECK(w[std::size_t(m - 1)] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("tsv round trip is idempotent after sorting") {
  SparseNonnegMatrix a = models::finite_random(17, 5, 0.5);
  std::string once = write_matrix_tsv(a);
  SparseNonnegMatrix b = parse_matrix_tsv(once);
  CHECK(write_matrix_tsv(b) == once);
}

TEST_CASE("tsv parsing: comments, blank lines, malformed input") {
  SparseNonnegMatrix a = parse_matrix_tsv("# comment\na\tb\t1.5\n\nb\ta\t0.5  # trailing\n");
  CHECK(a.size() == 2);
  CHECK(a.entry(a.index_of("a"), a.index_of("b")) == doctest::Approx(1.5));
  CHECK_THROWS_AS(parse_matrix_tsv("a b 1\n"), ParseError);
  CHECK_THROWS_AS(parse_matrix_tsv("a\tb\tnope\n"), ParseError);
}

TEST_CASE("log_dense_power_diag agrees with walk enumeration") {
  SparseNonnegMatrix a = models::finite_random(23, 3, 0.8);
  for (int n = 1; n <= 6; ++n) {
    double oracle = testutil::walk_sum(a, 0, 0, n);
    double lg = log_dense_power_diag(a, 0, n);
    if (oracle == 0.0)
      CHECK(lg == -std::numeric_limits<double>::infinity());
    else
      CHECK(std::exp(lg) == doctest::Approx(oracle).epsilon(1e-11));
  }
}

TEST_CASE("subgraph validation") {
  SparseNonnegMatrix a = two_cycle();
  Subgraph f;
  f.vertices = {"a"};
  f.edges = {{"a", "b"}};
  CHECK_THROWS_AS(f.validate(), PreconditionError);
  Subgraph g;
  g.vertices = {"a", "b"};
  g.edges = {{"a", "a"}};
  CHECK_THROWS_AS(g.validate_against(a), EdgeNotInSupport);
}
