#include <doctest.h>

#include <cmath>
#include <numeric>

#include "m2m/error.hpp"
#include "m2m/evaluation.hpp"
#include "m2m/mechanisms.hpp"
#include "oracles.hpp"

using namespace m2m;

namespace {

MechanismConfig paper_config(double p = 0.1) {
  MechanismConfig c;
  c.epsilon = deg2rad(0.15);
  c.outlier_range = deg2rad(5.0);
  c.p_x = c.p_y = p;
  return c;
}

SyntheticScene scene(std::uint64_t seed, std::size_t ambiguity = 3) {
  SceneConfig sc;
  sc.num_points = 30;
  sc.ambiguity = ambiguity;
  sc.seed = seed;
  return generate_scene(sc);
}

// Toy graph: x1-y2, x2-y1, x2-y3, x3-y3 (zero-based).
AssociationGraph toy() { return AssociationGraph(3, 3, {{0, 1, 1, 0}, {1, 0, 1, 0}, {1, 2, 1, 0}, {2, 2, 1, 0}}); }

}  // namespace

TEST_CASE("likelihood ratio constants") {
  const std::vector<std::pair<double, double>> table{{0.01, 0.34}, {0.05, 1.75}, {0.1, 3.70},  {0.2, 8.33},
                                                     {0.3, 14.29}, {0.5, 33.33}, {0.7, 77.78}};
  for (const auto& [p, c] : table) CHECK(likelihood_ratio_constant(p, 0.03) == doctest::Approx(c).epsilon(0.005 / c));
  CHECK(paper_config().delta() == doctest::Approx(0.03));
  CHECK(paper_config().c_x() == doctest::Approx(0.1 / 0.9 / 0.03));
}

TEST_CASE("true pose keeps every planted edge") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SyntheticScene s = scene(seed);
    const InlierGraph in = identify_inliers(s.graph, s.pose, paper_config());
    for (const MatchPair& m : s.truth.matches) {
      const auto e = s.graph.find_edge(m.first, m.second);
      REQUIRE(e.has_value());
      CHECK(std::binary_search(in.edges.begin(), in.edges.end(), *e));
    }
  }
}

TEST_CASE("vanishing threshold gives no inliers") {
  const SyntheticScene s = scene(1);
  MechanismConfig c = paper_config();
  c.epsilon = 0.0;
  oracle::Rng rng(1);
  CHECK(identify_inliers(s.graph, s.pose, c).edges.empty());
  CHECK(identify_inliers(s.graph, oracle::random_pose(rng), c).edges.empty());
}

TEST_CASE("inlier membership equals the per-edge cone oracle") {
  oracle::Rng rng(3);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const SyntheticScene s = scene(seed);
    MechanismConfig c = paper_config();
    c.epsilon = deg2rad(2.0);
    c.outlier_range = deg2rad(40.0);
    for (int h = 0; h < 3; ++h) {
      RelativePose pose = s.pose;
      if (h > 0) pose.R = exp_so3(oracle::random_unit(rng) * deg2rad(1.5)) * s.pose.R;
      const InlierGraph in = identify_inliers(s.graph, pose, c);
      std::vector<std::size_t> want;
      bool boundary = false;
      for (std::size_t e = 0; e < s.graph.num_edges(); ++e) {
        const Edge& ed = s.graph.edge(e);
        const double m = oracle::cone_margin(pose, s.graph.left()[ed.i], s.graph.right()[ed.j], c.epsilon);
        if (m > 0.0) want.push_back(e);
        boundary = boundary || std::abs(m) <= 1e-9;
      }
      if (boundary) continue;
      CHECK(in.edges == want);
      CHECK(cm_score(in) == want.size());
    }
  }
}

TEST_CASE("cm score counts edges") {
  CHECK(cm_score(InlierGraph{}) == 0);
  InlierGraph g;
  g.edges = {0, 1, 2, 3, 4, 5, 6};
  CHECK(cm_score(g) == 7);
}

TEST_CASE("matching cardinality of inlier graphs") {
  const AssociationGraph g = toy();
  CHECK(max_matching_cardinality(g, make_inlier_graph(g, {0, 1, 2})).cardinality == 2);
  CHECK(max_matching_cardinality(g, make_inlier_graph(g, {0, 1, 2, 3})).cardinality == 3);

  oracle::Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const AssociationGraph r = oracle::random_graph(rng, 8, 8, 16);
    std::vector<std::size_t> ids(r.num_edges());
    std::iota(ids.begin(), ids.end(), 0);
    CHECK(max_matching_cardinality(r, make_inlier_graph(r, ids)).cardinality == oracle::subset_max_matching(r, ids));
  }
}

TEST_CASE("hcm weights") {
  // Star: one left vertex, three right neighbours, each p = 0.1, Px = 0.3.
  const AssociationGraph g(1, 3, {{0, 0, 1, 0}, {0, 1, 1, 0}, {0, 2, 1, 0}});
  AssignmentConfig ac;
  ac.p_x = ac.p_y = 0.3;
  const ProbabilityAssignment a = assign_marginals(g, ac);

  const HcmWeights all = hcm_weights(g, make_inlier_graph(g, {0, 1, 2}), a);
  CHECK(all.left[0] == doctest::Approx(1.0));
  const HcmWeights one = hcm_weights(g, make_inlier_graph(g, {1}), a);
  CHECK(one.left[0] == doctest::Approx(1.0 / 3.0));
  CHECK(one.right[0] == 0.0);
  CHECK(one.right[1] == doctest::Approx(1.0));
  const HcmWeights none = hcm_weights(g, make_inlier_graph(g, {}), a);
  CHECK(none.left[0] == 0.0);
}

TEST_CASE("hcm score") {
  CHECK(hcm_score(HcmWeights{{0.0, 0.0}, {0.0}}, paper_config()) == 0.0);
  CHECK(hcm_score(HcmWeights{{1.0}, {}}, paper_config()) == doctest::Approx(std::log1p(0.1 / 0.9 / 0.03)));
  // C = 3.70 to two decimals: log(4.70) = 1.5476.
  CHECK(std::abs(hcm_score(HcmWeights{{1.0}, {}}, paper_config()) - 1.5476) < 1e-3);

  oracle::Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    HcmWeights w;
    w.left.resize(20);
    w.right.resize(15);
    for (double& v : w.left) v = u(rng);
    for (double& v : w.right) v = u(rng);
    const MechanismConfig c = paper_config(0.05 + 0.5 * u(rng));
    long double want = 0.0L;
    for (double v : w.left) want += std::log(1.0L + static_cast<long double>(c.c_x()) * v);
    for (double v : w.right) want += std::log(1.0L + static_cast<long double>(c.c_y()) * v);
    CHECK(std::abs(hcm_score(w, c) - static_cast<double>(want)) <= 1e-12 * std::max(1.0, std::abs(static_cast<double>(want))));
  }
}

TEST_CASE("hcm evaluator equals the definition") {
  oracle::Rng rng(6);
  HcmEvaluator ev;
  for (int trial = 0; trial < 100; ++trial) {
    const AssociationGraph g = oracle::random_graph(rng, 25, 25, 60);
    const ProbabilityAssignment a = assign_marginals(g, {});
    std::vector<std::size_t> in;
    for (std::size_t e = 0; e < g.num_edges(); ++e)
      if (rng() % 3 == 0) in.push_back(e);
    const MechanismConfig c = paper_config();
    const double want = oracle::hcm_direct(g, in, a.edge_prob, a.left_total, a.right_total, c);
    CHECK(ev.run(g, in, a, c) == doctest::Approx(want).epsilon(1e-12));
    CHECK(hcm_score(hcm_weights(g, make_inlier_graph(g, in), a), c) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("hcm evaluator on dense inlier sets and extreme constants") {
  oracle::Rng rng(16);
  HcmEvaluator ev;
  for (int trial = 0; trial < 100; ++trial) {
    const AssociationGraph g = oracle::random_graph(rng, 12, 14, 80);
    const ProbabilityAssignment a = assign_marginals(g, {});
    std::vector<std::size_t> in;
    for (std::size_t e = 0; e < g.num_edges(); ++e)
      if (rng() % 4 != 0) in.push_back(e);
    MechanismConfig c = paper_config(trial % 2 == 0 ? 0.1 : 0.9);
    if (trial % 3 == 0) c.epsilon = 1e-90 * c.outlier_range;
    const double want = oracle::hcm_direct(g, in, a.edge_prob, a.left_total, a.right_total, c);
    CHECK(ev.run(g, in, a, c) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("weights depend only on the prior ratio") {
  oracle::Rng rng(7);
  int compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const AssociationGraph g = oracle::random_graph(rng, 12, 12, 25);
    std::vector<std::size_t> in;
    for (std::size_t e = 0; e < g.num_edges(); ++e)
      if (rng() % 2) in.push_back(e);
    AssignmentConfig base;
    base.p_x = 0.1;
    base.p_y = 0.15;
    base.tolerance = 1e-13;
    const ProbabilityAssignment a = assign_marginals(g, base);
    const HcmWeights w = hcm_weights(g, make_inlier_graph(g, in), a);
    for (double k : {0.5, 2.0}) {
      AssignmentConfig scaled = base;
      scaled.p_x *= k;
      scaled.p_y *= k;
      const ProbabilityAssignment b = assign_marginals(g, scaled);
      const bool saturated = std::any_of(b.edge_prob.begin(), b.edge_prob.end(), [](double p) { return p >= 1.0; });
      if (saturated) continue;
      const HcmWeights v = hcm_weights(g, make_inlier_graph(g, in), b);
      for (std::size_t i = 0; i < w.left.size(); ++i) CHECK(std::abs(w.left[i] - v.left[i]) <= 1e-8);
      for (std::size_t j = 0; j < w.right.size(); ++j) CHECK(std::abs(w.right[j] - v.right[j]) <= 1e-8);
      ++compared;
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("conditional likelihood of the toy configuration") {
  MechanismConfig c;
  c.epsilon = 0.02;
  c.outlier_range = 0.5;
  const double d = c.delta();
  const double e = c.epsilon;
  CHECK(conditional_likelihood(4, 2, c) == doctest::Approx(std::pow(1.0 / e, 2) * std::pow(d / e, 2)).epsilon(1e-12));
}

TEST_CASE("exact likelihood") {
  MechanismConfig c;
  c.epsilon = 0.02;
  c.outlier_range = 0.5;
  const double d = c.delta();
  const AssociationGraph g = toy();
  const double total = static_cast<double>(enumerate_matchings(g).size());

  const LikelihoodValue none = exact_likelihood(g, make_inlier_graph(g, {}), c);
  CHECK(none.value == doctest::Approx(std::pow(c.outlier_range, -4.0) / total).epsilon(1e-12));

  const LikelihoodValue three = exact_likelihood(g, make_inlier_graph(g, {0, 1, 2}), c);
  const double want = (1 + 3 / d + 2 / (d * d)) * std::pow(c.outlier_range, -4.0) / total;
  CHECK(three.value == doctest::Approx(want).epsilon(1e-12));
  CHECK(three.log_value == doctest::Approx(std::log(want)).epsilon(1e-12));
}

TEST_CASE("zeroth-order approximation") {
  MechanismConfig c;
  c.epsilon = 0.03 * deg2rad(5.0);
  c.outlier_range = deg2rad(5.0);
  const AssociationGraph g = toy();
  const ApproxLogLikelihood a = approx_log_likelihood(g, make_inlier_graph(g, {0, 1, 2}), c);
  CHECK(a.max_cardinality == 2);
  REQUIRE(a.num_max.has_value());
  CHECK(*a.num_max == 2);
  CHECK(a.value == doctest::Approx(std::log(2.0) + 2 * std::log(1 / c.delta())));

  const AssociationGraph k11(1, 1, {{0, 0, 1, 0}});
  CHECK(approx_log_likelihood(k11, make_inlier_graph(k11, {0}), c).value == doctest::Approx(std::log(1 / c.delta())));

  const AssociationGraph m3(3, 3, {{0, 0, 1, 0}, {1, 1, 1, 0}, {2, 2, 1, 0}});
  CHECK(approx_log_likelihood(m3, make_inlier_graph(m3, {0, 1, 2}), c).value ==
        doctest::Approx(3 * std::log(100.0 / 3.0)));
}

TEST_CASE("score_hypothesis per mechanism") {
  const SyntheticScene s = scene(2);
  const ProbabilityAssignment a = assign_marginals(s.graph, {});
  const MechanismConfig c = paper_config();
  const HypothesisScore cm = score_hypothesis(s.graph, s.pose, c, Mechanism::kCm);
  const HypothesisScore mcm = score_hypothesis(s.graph, s.pose, c, Mechanism::kMcm);
  const HypothesisScore hcm = score_hypothesis(s.graph, s.pose, c, Mechanism::kHcm, &a);
  CHECK(cm.score == static_cast<double>(cm.inliers.edges.size()));
  CHECK(mcm.score == static_cast<double>(oracle::kuhn_max_matching(s.graph, mcm.inliers.edges)));
  CHECK(hcm.score == doctest::Approx(oracle::hcm_direct(s.graph, hcm.inliers.edges, a.edge_prob, a.left_total,
                                                        a.right_total, c)));
  CHECK_THROWS_AS(score_hypothesis(s.graph, s.pose, c, Mechanism::kHcm), InputError);
}

TEST_CASE("mechanism names") {
  for (Mechanism m : {Mechanism::kCm, Mechanism::kMcm, Mechanism::kHcm, Mechanism::kMcmThenHcm})
    CHECK(parse_mechanism(to_string(m)) == m);
  CHECK_FALSE(parse_mechanism("ransac").has_value());
}
