#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "m2m/marginal.hpp"
#include "m2m/sweep.hpp"
#include "oracles.hpp"

using namespace m2m;

namespace {

std::vector<Edge> distinct_edges(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t k = 0; k < n; ++k) e.push_back({static_cast<Index>(k), static_cast<Index>(k), 1, 0.5});
  return e;
}

std::vector<Arc> random_intervals(oracle::Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::vector<Arc> out;
  for (std::size_t k = 0; k < n; ++k) {
    double a = u(rng);
    double b = u(rng);
    if (rng() % 8 == 0) b = a;  // point interval
    if (a > b) std::swap(a, b);
    out.push_back({a, b});
  }
  return out;
}

// Edge ids active after each event, from the sorted event list.
std::vector<std::vector<std::size_t>> active_sets(const std::vector<IntervalEvent>& events) {
  std::vector<std::vector<std::size_t>> out;
  std::set<std::size_t> on;
  for (const IntervalEvent& ev : events) {
    if (ev.kind == EventKind::kEnter) {
      on.insert(ev.edge);
    } else {
      on.erase(ev.edge);
    }
    out.emplace_back(on.begin(), on.end());
  }
  return out;
}

}  // namespace

TEST_CASE("events are ordered by phi, enter first, then edge id") {
  std::vector<IntervalEvent> ev{{1.0, EventKind::kExit, 0}, {1.0, EventKind::kEnter, 2},
                                {0.5, EventKind::kEnter, 0}, {1.0, EventKind::kEnter, 1}};
  sort_events(ev);
  CHECK(ev[0].phi == 0.5);
  CHECK(ev[1].edge == 1);
  CHECK(ev[2].edge == 2);
  CHECK(ev[3].kind == EventKind::kExit);
}

TEST_CASE("cm sweep over three overlapping intervals") {
  const std::vector<Arc> iv{{0.0, 1.0}, {0.5, 2.0}, {1.5, 3.0}};
  const auto e = distinct_edges(3);
  const auto ev = events_from_intervals(iv, e);
  const SweepResult r = sweep_cm(ev);
  CHECK(r.score == 2.0);
  CHECK(r.phi == 0.5);
  CHECK(r.phi_mid > 0.5);
  CHECK(r.phi_mid < 1.0);
}

TEST_CASE("cm sweep edge cases") {
  CHECK(sweep_cm({}).score == 0.0);
  CHECK(sweep_cm({}).phi == 0.0);

  const auto one = events_from_intervals(std::vector<Arc>{{0.2, 0.4}}, distinct_edges(1));
  CHECK(sweep_cm(one).score == 1.0);

  const std::vector<Arc> apart{{0.0, 0.1}, {0.2, 0.3}, {0.4, 0.5}};
  SweepOptions opt;
  opt.collect_ties = true;
  const SweepResult r = sweep_cm(events_from_intervals(apart, distinct_edges(3)), opt);
  CHECK(r.score == 1.0);
  CHECK(r.phi == 0.0);
  CHECK(r.ties.size() == 3);

  const std::vector<Arc> touching{{0.0, 1.0}, {1.0, 2.0}};
  CHECK(sweep_cm(events_from_intervals(touching, distinct_edges(2))).score == 2.0);
}

TEST_CASE("cm trace counts the active intervals") {
  oracle::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto iv = random_intervals(rng, 40);
    const auto ev = events_from_intervals(iv, distinct_edges(40));
    std::vector<double> trace;
    SweepOptions opt;
    opt.trace = &trace;
    const SweepResult r = sweep_cm(ev, opt);
    const auto sets = active_sets(ev);
    REQUIRE(trace.size() == sets.size());
    double best = 0.0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      CHECK(trace[k] == static_cast<double>(sets[k].size()));
      best = std::max(best, trace[k]);
    }
    CHECK(r.score == best);
  }
}

TEST_CASE("hcm sweep of a single edge") {
  const AssociationGraph g(1, 1, {{0, 0, 1, 0}});
  MechanismConfig c;
  const std::vector<double> tot{0.4};
  std::vector<Edge> e{{0, 0, 1, 0.4}};
  const auto ev = events_from_intervals(std::vector<Arc>{{1.0, 2.0}}, e);
  const SweepResult r = sweep_hcm(ev, tot, tot, c);
  CHECK(r.score == doctest::Approx(std::log1p(c.c_x()) + std::log1p(c.c_y())).epsilon(1e-12));
  CHECK(r.phi == 1.0);
}

TEST_CASE("hcm trace equals a batch recompute") {
  oracle::Rng rng(19);
  MechanismConfig c;
  for (int trial = 0; trial < 100; ++trial) {
    const AssociationGraph g = oracle::random_graph(rng, 16, 16, 64);
    const auto a = assign_marginals(g, {});
    std::vector<Edge> e = g.edges();
    for (std::size_t k = 0; k < e.size(); ++k) e[k].prob = a.edge_prob[k];
    const auto ev = events_from_intervals(random_intervals(rng, e.size()), e);
    std::vector<double> trace;
    SweepOptions opt;
    opt.trace = &trace;
    const SweepResult r = sweep_hcm(ev, a.left_total, a.right_total, c, opt);
    const auto sets = active_sets(ev);
    REQUIRE(trace.size() == sets.size());
    double best = 0.0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      const double want = oracle::hcm_direct(g, sets[k], a.edge_prob, a.left_total, a.right_total, c);
      CHECK(std::abs(trace[k] - want) <= 1e-9 * std::max(1.0, want));
      best = std::max(best, want);
    }
    CHECK(r.score == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("mcm on shared and disjoint vertices") {
  const std::vector<Arc> iv{{0.0, 2.0}, {0.5, 1.0}};
  std::vector<Edge> shared{{0, 0, 1, 0}, {0, 1, 1, 0}};
  CHECK(sweep_mcm(events_from_intervals(iv, shared), 1, 2).score == 1.0);
  std::vector<Edge> apart{{0, 0, 1, 0}, {1, 1, 1, 0}};
  CHECK(sweep_mcm(events_from_intervals(iv, apart), 2, 2).score == 2.0);
}

TEST_CASE("mcm trace equals a fresh matching per event") {
  oracle::Rng rng(23);
  SweepWorkspace ws;
  for (int trial = 0; trial < 100; ++trial) {
    const AssociationGraph g = oracle::random_graph(rng, 12, 12, 48);
    const auto ev = events_from_intervals(random_intervals(rng, g.num_edges()), g.edges());
    std::vector<double> trace;
    SweepOptions opt;
    opt.trace = &trace;
    const SweepResult r = ws.mcm(ev, g.num_left(), g.num_right(), opt);
    const auto sets = active_sets(ev);
    REQUIRE(trace.size() == sets.size());
    double best = 0.0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      const auto want = static_cast<double>(oracle::kuhn_max_matching(g, sets[k]));
      CHECK(trace[k] == want);
      best = std::max(best, want);
    }
    CHECK(r.score == best);
  }
}

TEST_CASE("dynamic matching returns to empty") {
  oracle::Rng rng(29);
  const AssociationGraph g = oracle::random_graph(rng, 10, 10, 30);
  DynamicMatching m;
  m.reset(10, 10);
  for (std::size_t e = 0; e < g.num_edges(); ++e) m.insert(e, g.edge(e).i, g.edge(e).j);
  std::vector<std::size_t> all(g.num_edges());
  for (std::size_t e = 0; e < all.size(); ++e) all[e] = e;
  CHECK(m.size() == oracle::kuhn_max_matching(g, all));
  CHECK(m.matching().size() == m.size());
  for (std::size_t e = 0; e < g.num_edges(); ++e) m.erase(e, g.edge(e).i, g.edge(e).j);
  CHECK(m.clean());
}

TEST_CASE("workspace sweeps agree with the free functions") {
  oracle::Rng rng(31);
  SweepWorkspace ws;
  MechanismConfig c;
  for (int trial = 0; trial < 20; ++trial) {
    const AssociationGraph g = oracle::random_graph(rng, 10, 10, 30);
    const auto a = assign_marginals(g, {});
    std::vector<Edge> e = g.edges();
    for (std::size_t k = 0; k < e.size(); ++k) e[k].prob = a.edge_prob[k];
    const auto ev = events_from_intervals(random_intervals(rng, e.size()), e);
    CHECK(ws.cm(ev).score == sweep_cm(ev).score);
    CHECK(ws.hcm(ev, a.left_total, a.right_total, c).score ==
          sweep_hcm(ev, a.left_total, a.right_total, c).score);
    CHECK(ws.mcm(ev, 10, 10).score == sweep_mcm(ev, 10, 10).score);
  }
}

TEST_CASE("tie collection is capped") {
  const std::vector<Arc> apart{{0.0, 0.1}, {0.2, 0.3}, {0.4, 0.5}, {0.6, 0.7}};
  SweepOptions opt;
  opt.collect_ties = true;
  opt.max_ties = 2;
  const SweepResult r = sweep_cm(events_from_intervals(apart, distinct_edges(4)), opt);
  CHECK(r.ties.size() == 2);
  CHECK(r.tie_overflow);
}
