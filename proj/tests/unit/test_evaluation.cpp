#include <doctest.h>

#include <algorithm>

#include "m2m/error.hpp"
#include "m2m/evaluation.hpp"
#include "oracles.hpp"

using namespace m2m;

TEST_CASE("scenes are deterministic per seed") {
  SceneConfig c;
  c.seed = 12;
  c.noise_deg = 0.1;
  const SyntheticScene a = generate_scene(c);
  const SyntheticScene b = generate_scene(c);
  CHECK(a.graph.edges() == b.graph.edges());
  CHECK(a.graph.left() == b.graph.left());
  CHECK(a.truth.matches == b.truth.matches);
  CHECK(a.pose.R == b.pose.R);
  c.seed = 13;
  CHECK_FALSE(generate_scene(c).graph.left() == a.graph.left());
}

TEST_CASE("clean scenes hold only the true associations") {
  SceneConfig c;
  c.outlier_fraction = 0.0;
  c.ambiguity = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    const SyntheticScene s = generate_scene(c);
    std::vector<MatchPair> got;
    for (const Edge& e : s.graph.edges()) got.emplace_back(e.i, e.j);
    std::sort(got.begin(), got.end());
    CHECK(got == s.truth.matches);
    for (const Edge& e : s.graph.edges()) CHECK(angular_residual(s.pose, s.graph.left()[e.i], s.graph.right()[e.j]) < 1e-7);
  }
}

TEST_CASE("scene degrees and sizes") {
  SceneConfig c;
  c.num_points = 50;
  c.outlier_fraction = 0.2;
  for (std::size_t k : {2u, 3u, 5u}) {
    c.ambiguity = k;
    c.seed = k;
    const SyntheticScene s = generate_scene(c);
    CHECK(s.graph.num_left() == 50 + 13);
    CHECK(s.truth.matches.size() == 50);
    CHECK(s.graph.max_left_degree() <= k);
    CHECK(s.graph.max_right_degree() <= k);
    CHECK(s.graph.num_edges() > 50);
  }
  c.outlier_fraction = 1.0;
  CHECK_THROWS_AS(generate_scene(c), InputError);
}

TEST_CASE("pose error") {
  RelativePose truth;
  CHECK(pose_error(truth, truth).combined == 0.0);
  RelativePose est;
  est.R = rot_z(deg2rad(3.0));
  est.t = Vec3(std::sin(deg2rad(5.0)), 0.0, std::cos(deg2rad(5.0)));
  const PoseError e = pose_error(est, truth);
  CHECK(rad2deg(e.rotation) == doctest::Approx(3.0));
  CHECK(rad2deg(e.translation) == doctest::Approx(5.0));
  CHECK(e.combined_deg() == doctest::Approx(5.0));

  RelativePose far;
  far.R = rot_z(deg2rad(20.0));
  const std::vector<RelativePose> set{truth, far, est};
  CHECK(pose_error(set, truth).combined_deg() == doctest::Approx(20.0));
  CHECK_THROWS_AS(pose_error(std::span<const RelativePose>{}, truth), InputError);
}

TEST_CASE("auc against a fine trapezoid integral") {
  const std::vector<double> errors{5.0, 15.0, 25.0};
  const std::vector<double> t{30.0};
  CHECK(pose_auc(errors, t)[0] == doctest::Approx(oracle::auc_integral(errors, 30.0)).epsilon(1e-6));
  CHECK(pose_auc(errors, t)[0] == doctest::Approx(115.0 / 180.0));

  oracle::Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 40.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> e(20);
    for (double& v : e) v = u(rng);
    const std::vector<double> ts{10.0, 20.0, 30.0};
    const auto got = pose_auc(e, ts);
    for (std::size_t k = 0; k < ts.size(); ++k)
      CHECK(got[k] == doctest::Approx(oracle::auc_integral(e, ts[k])).epsilon(1e-6));
  }
}

TEST_CASE("auc limits") {
  const std::vector<double> zero{0.0, 0.0, 0.0};
  const std::vector<double> above{40.0, 50.0};
  const std::vector<double> t{10.0, 30.0};
  for (double v : pose_auc(zero, t)) CHECK(v == doctest::Approx(1.0));
  for (double v : pose_auc(above, t)) CHECK(v == 0.0);
  CHECK_THROWS_AS(pose_auc({}, t), InputError);
}

TEST_CASE("histogram") {
  const std::vector<double> v{0.0, 0.5, 1.0, 1.5, 9.9, 10.0, -1.0};
  const Histogram h = make_histogram(v, 0.0, 10.0, 10);
  CHECK(h.counts[0] == 3);
  CHECK(h.counts[1] == 2);
  CHECK(h.counts[9] == 2);
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(median({}) == 0.0);
}

TEST_CASE("discretization error shrinks with the grid") {
  const DiscretizationReport r16 = discretization_mc(16, 2000, 1);
  const DiscretizationReport r32 = discretization_mc(32, 2000, 1);
  const DiscretizationReport r64 = discretization_mc(64, 2000, 1);
  CHECK(rad2deg(r32.max_rotation) < 7.0);
  CHECK(rad2deg(r32.max_translation) < 4.0);
  CHECK(r16.max_rotation >= r32.max_rotation);
  CHECK(r16.max_translation >= r32.max_translation);
  CHECK(median(r64.rotation) < median(r32.rotation));
  CHECK(median(r64.translation) < median(r32.translation));
  CHECK(r32.rotation.size() == 2000);
}

TEST_CASE("sensitivity constants") {
  SensitivityConfig c;
  c.mechanism.epsilon = deg2rad(0.15);
  c.mechanism.outlier_range = deg2rad(5.0);
  const auto rows = sensitivity_sweep({}, c);
  REQUIRE(rows.size() == c.p_values.size());
  for (const SensitivityRow& r : rows) CHECK(r.c == doctest::Approx(r.p / (1.0 - r.p) / 0.03));
  CHECK(rows[2].c == doctest::Approx(3.70).epsilon(1e-2));
  CHECK(rows.back().c == doctest::Approx(77.78).epsilon(1e-3));
}

TEST_CASE("sensitivity sweep on a small scene") {
  SceneConfig sc;
  sc.num_points = 15;
  sc.ambiguity = 2;
  sc.seed = 2;
  const std::vector<SyntheticScene> scenes{generate_scene(sc)};
  SensitivityConfig c;
  c.p_values = {0.1, 0.5};
  c.grid_n = 6;
  c.mechanism.epsilon = deg2rad(1.0);
  c.mechanism.outlier_range = c.mechanism.epsilon / 0.03;
  const auto rows = sensitivity_sweep(scenes, c);
  REQUIRE(rows.size() == 2);
  for (const SensitivityRow& r : rows) {
    CHECK(r.errors_deg.size() == 1);
    CHECK(r.auc.size() == c.thresholds_deg.size());
  }
}

TEST_CASE("evaluation timing is faster for hcm on large inlier sets") {
  EvalTimeConfig c;
  c.features = 64;
  c.inlier_counts = {32, 1024};
  c.trials = 40;
  c.repeats = 4;
  const auto rows = eval_time_bench(c);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].inliers == 32);
  for (const EvalTimeRow& r : rows) {
    CHECK(r.mcm_median_us > 0.0);
    CHECK(r.hcm_median_us > 0.0);
  }
  CHECK(rows[1].ratio() > 1.0);
  c.inlier_counts = {64 * 64 + 1};
  CHECK_THROWS_AS(eval_time_bench(c), InputError);
}
