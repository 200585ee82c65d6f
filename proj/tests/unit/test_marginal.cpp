#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "m2m/error.hpp"
#include "m2m/marginal.hpp"
#include "oracles.hpp"

using namespace m2m;

namespace {

double objective(const std::vector<double>& p, double ref) {
  double f = 0.0;
  for (double v : p) f += (v - ref) * (v - ref);
  return f;
}

double max_excess(const AssociationGraph& g, const std::vector<double>& p, double px, double py) {
  std::vector<double> row(g.num_left(), 0.0);
  std::vector<double> col(g.num_right(), 0.0);
  double worst = 0.0;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    row[g.edge(e).i] += p[e];
    col[g.edge(e).j] += p[e];
    worst = std::max({worst, -p[e], p[e] - 1.0});
  }
  for (double r : row) worst = std::max(worst, r - px);
  for (double c : col) worst = std::max(worst, c - py);
  return worst;
}

}  // namespace

TEST_CASE("reference probability") {
  CHECK(reference_probability(1, 1, 1, 0.5, 0.5) == doctest::Approx(0.5));
  CHECK(reference_probability(1, 3, 3, 0.3, 0.3) == doctest::Approx(0.2));
  CHECK(reference_probability(4, 4, 5, 0.0, 0.0) == 0.0);
  CHECK_THROWS_AS(reference_probability(2, 2, 0, 0.1, 0.1), EmptyGraphError);
}

TEST_CASE("single edge keeps the interior optimum") {
  const AssociationGraph g(1, 1, {{0, 0, 1, 0}});
  AssignmentConfig c;
  c.p_x = c.p_y = 0.5;
  const auto a = assign_marginals(g, c);
  CHECK(a.edge_prob[0] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("star splits the binding row constraint") {
  const AssociationGraph g(1, 3, {{0, 0, 1, 0}, {0, 1, 1, 0}, {0, 2, 1, 0}});
  AssignmentConfig c;
  c.p_x = c.p_y = 0.3;
  const auto a = assign_marginals(g, c);
  CHECK(a.reference == doctest::Approx(0.2));
  for (double p : a.edge_prob) CHECK(p == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(a.left_total[0] == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("slack constraints give the reference everywhere") {
  for (Index n : {3u, 4u}) {
    std::vector<Edge> e;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) e.push_back({i, j, 1, 0});
    const AssociationGraph g(n, n, e);
    AssignmentConfig c;
    c.p_x = c.p_y = 1.0;
    const auto a = assign_marginals(g, c);
    const std::size_t maxdeg = std::max(g.max_left_degree(), g.max_right_degree());
    REQUIRE(a.reference <= 1.0 / static_cast<double>(maxdeg) + 1e-15);
    for (double p : a.edge_prob) CHECK(p == doctest::Approx(a.reference).epsilon(1e-12));
  }
}

TEST_CASE("assignment matches the active-set oracle") {
  oracle::Rng rng(17);
  std::uniform_int_distribution<std::size_t> side(2, 7);
  std::uniform_real_distribution<double> prior(0.05, 0.6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t nl = side(rng);
    const std::size_t nr = side(rng);
    std::uniform_int_distribution<std::size_t> count(1, std::min<std::size_t>(12, nl * nr));
    const AssociationGraph g = oracle::random_graph(rng, nl, nr, count(rng));
    AssignmentConfig c;
    c.p_x = prior(rng);
    c.p_y = prior(rng);
    c.tolerance = 1e-12;
    c.max_iterations = 200000;
    const auto a = assign_marginals(g, c);
    const auto want = oracle::active_set_qp(g, a.reference, c.p_x, c.p_y);
    CHECK(std::abs(a.objective() - objective(want, a.reference)) <= 1e-6);
    CHECK(max_excess(g, a.edge_prob, c.p_x, c.p_y) <= 1e-8);
  }
}

TEST_CASE("vertex totals add up the assigned probabilities") {
  oracle::Rng rng(8);
  const AssociationGraph g = oracle::random_graph(rng, 30, 30, 80);
  const auto a = assign_marginals(g, {});
  std::vector<double> row(g.num_left(), 0.0);
  for (std::size_t e = 0; e < g.num_edges(); ++e) row[g.edge(e).i] += a.edge_prob[e];
  for (std::size_t i = 0; i < row.size(); ++i) CHECK(row[i] == doctest::Approx(a.left_total[i]).epsilon(1e-12));
}

TEST_CASE("assignment is independent of the worker count") {
  oracle::Rng rng(21);
  const AssociationGraph g = oracle::random_graph(rng, 60, 60, 150);
  const auto one = assign_marginals(g, {}, 1);
  const auto four = assign_marginals(g, {}, 4);
  CHECK(one.edge_prob == four.edge_prob);
}

TEST_CASE("capped simplex shift") {
  CHECK(capped_simplex_shift({0.2, 0.3}, 1.0) == 0.0);
  const double tau = capped_simplex_shift({0.5, 0.4, 0.1}, 0.6);
  double sum = 0.0;
  for (double z : {0.5, 0.4, 0.1}) sum += std::clamp(z - tau, 0.0, 1.0);
  CHECK(sum == doctest::Approx(0.6));
}

TEST_CASE("assignment rejects empty graphs and bad priors") {
  CHECK_THROWS_AS(assign_marginals(AssociationGraph(2, 2, {}), {}), EmptyGraphError);
  AssignmentConfig c;
  c.p_x = 0.0;
  CHECK_THROWS_AS(assign_marginals(AssociationGraph(1, 1, {{0, 0, 1, 0}}), c), InputError);
}

TEST_CASE("non-convergence raises a numerical error") {
  oracle::Rng rng(2);
  const AssociationGraph g = oracle::random_graph(rng, 6, 6, 20);
  AssignmentConfig c;
  c.p_x = c.p_y = 0.05;
  c.max_iterations = 1;
  c.tolerance = 1e-15;
  CHECK_THROWS_AS(assign_marginals(g, c), ConvergenceError);
}
