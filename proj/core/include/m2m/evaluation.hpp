#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "m2m/association.hpp"
#include "m2m/geometry.hpp"
#include "m2m/marginal.hpp"
#include "m2m/mechanisms.hpp"
#include "m2m/search.hpp"

namespace m2m {

using Rng = std::mt19937_64;

/// Uniform axis on the sphere, angle uniform in [0, max_angle).
Mat3 random_rotation(Rng& rng, double max_angle = kPi);
Vec3 random_unit_vector(Rng& rng);

struct SceneConfig {
  std::size_t num_points = 40;
  /// Fraction of features per image with no true partner, in [0, 1).
  double outlier_fraction = 0.2;
  /// Candidates per feature (MKNN K). 0 or 1: correct edges only.
  std::size_t ambiguity = 3;
  double noise_deg = 0.0;        // Gaussian angular noise per bearing
  double max_rotation_deg = 45.0;
  double fov_deg = 90.0;         // full cone angle of each camera
  double min_depth = 2.0;
  double max_depth = 8.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticScene {
  RelativePose pose;
  std::vector<Vec3> points;  // first camera frame
  AssociationGraph graph;
  GroundTruth truth;
  std::uint64_t seed = 0;
};

/// Deterministic for a fixed seed. Distractor edges join each feature to the
/// features of its nearest 3D neighbours; outlier features join random ones.
SyntheticScene generate_scene(const SceneConfig& config);

struct PoseError {
  double rotation = 0.0;     // radians
  double translation = 0.0;  // radians
  double combined = 0.0;     // max of the two

  double combined_deg() const { return rad2deg(combined); }
};

PoseError pose_error(const RelativePose& estimate, const RelativePose& truth);
/// Largest combined error over a set of tied estimates. Throws on empty input.
PoseError pose_error(std::span<const RelativePose> estimates, const RelativePose& truth);

/// Area under the cumulative recall curve up to each threshold, normalised
/// by the threshold. Errors and thresholds share units.
std::vector<double> pose_auc(std::span<const double> errors, std::span<const double> thresholds);

struct Histogram {
  double lo = 0.0;
  double width = 0.0;
  std::vector<std::size_t> counts;
};
Histogram make_histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

struct DiscretizationReport {
  int n = 0;
  std::vector<double> rotation;     // radians per trial
  std::vector<double> translation;  // radians per trial
  double max_rotation = 0.0;
  double max_translation = 0.0;
};

/// Snaps v1, v2 of random poses to the N-grid (phi kept) and records the
/// resulting rotation and translation errors.
DiscretizationReport discretization_mc(int n, std::size_t trials, std::uint64_t seed);

struct SensitivityRow {
  double p = 0.0;
  double c = 0.0;
  std::vector<double> errors_deg;  // per scene
  std::vector<double> auc;         // per threshold
};

struct SensitivityConfig {
  std::vector<double> p_values{0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7};
  std::vector<double> thresholds_deg{10.0, 20.0, 30.0};
  MechanismConfig mechanism;
  int grid_n = 32;
  int threads = 1;
};

/// Re-assigns marginals with p_x = p_y = p and re-runs HCM search per scene.
std::vector<SensitivityRow> sensitivity_sweep(std::span<const SyntheticScene> scenes,
                                              const SensitivityConfig& config);

struct EvalTimeConfig {
  std::size_t features = 256;
  std::vector<std::size_t> inlier_counts{128, 256, 512, 1024};
  std::size_t trials = 1000;
  std::size_t repeats = 8;  // evaluations per timed sample
  std::uint64_t seed = 0;
};

struct EvalTimeRow {
  std::size_t inliers = 0;
  double mcm_median_us = 0.0;
  double hcm_median_us = 0.0;
  double ratio() const { return hcm_median_us > 0.0 ? mcm_median_us / hcm_median_us : 0.0; }
};

/// Median time of the post-inlier stage: Hopcroft-Karp for MCM, the weight
/// and log sum for HCM. Inlier sets are sampled uniformly without replacement
/// from the features x features pairs.
std::vector<EvalTimeRow> eval_time_bench(const EvalTimeConfig& config);

double median(std::vector<double> values);

}  // namespace m2m
