#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "m2m/association.hpp"
#include "m2m/geometry.hpp"
#include "m2m/marginal.hpp"
#include "m2m/matching.hpp"

namespace m2m {

/// Robust scoring mechanisms. kMcmThenHcm is a search mode: MCM search whose
/// tied optima are re-ranked by HCM.
enum class Mechanism { kCm, kMcm, kHcm, kMcmThenHcm };

std::string_view to_string(Mechanism m);
std::optional<Mechanism> parse_mechanism(std::string_view name);

/// Inlier threshold and outlier model. Angles are radians.
struct MechanismConfig {
  double epsilon = deg2rad(0.15);
  double outlier_range = deg2rad(5.0);  // epsilon / delta
  double p_x = 0.1;
  double p_y = 0.1;

  double delta() const { return epsilon / outlier_range; }
  double c_x() const { return p_x / (1.0 - p_x) / delta(); }
  double c_y() const { return p_y / (1.0 - p_y) / delta(); }

  void validate() const;
};

/// C = p / (1 - p) / delta.
double likelihood_ratio_constant(double p, double delta);

/// Edges whose residual is below epsilon under a hypothesis, and the
/// vertices they touch.
struct InlierGraph {
  std::vector<std::size_t> edges;  // sorted
  std::vector<Index> left;         // sorted, unique
  std::vector<Index> right;        // sorted, unique
};

InlierGraph make_inlier_graph(const AssociationGraph& graph, std::vector<std::size_t> edges);

/// Edges with angular_residual < epsilon (strict) under `pose`.
InlierGraph identify_inliers(const AssociationGraph& graph, const RelativePose& pose,
                             const MechanismConfig& config, double tol = 1e-10);

inline std::size_t cm_score(const InlierGraph& inliers) { return inliers.edges.size(); }

MatchingResult max_matching_cardinality(const AssociationGraph& graph, const InlierGraph& inliers);

struct HcmWeights {
  std::vector<double> left;   // w_i, one per left feature
  std::vector<double> right;  // w_j, one per right feature
};

/// w_i = (sum of inlier p_ij) / (total assigned to i), symmetrically for j.
/// Throws InputError for an inlier vertex with zero assigned total.
HcmWeights hcm_weights(const AssociationGraph& graph, const InlierGraph& inliers,
                       const ProbabilityAssignment& assignment);

/// sum_i log(1 + C_x w_i) + sum_j log(1 + C_y w_j), natural log.
double hcm_score(const HcmWeights& weights, const MechanismConfig& config);

/// Post-inlier HCM evaluation with reusable buffers; touches only inlier
/// vertices, O(|E_in| + |V_in|).
class HcmEvaluator {
 public:
  double run(const AssociationGraph& graph, std::span<const std::size_t> inlier_edges,
             const ProbabilityAssignment& assignment, const MechanismConfig& config);

 private:
  std::vector<double> wx_;
  std::vector<double> wy_;
  std::vector<Index> touched_left_;
  std::vector<Index> touched_right_;
};

/// Likelihood of one configuration given |E| associations, |M| of them real:
/// (eps / delta)^(-|E|) (1 / delta)^|M|.
double conditional_likelihood(std::size_t num_edges, std::size_t matching_size,
                              const MechanismConfig& config);

struct LikelihoodValue {
  double value = 0.0;
  double log_value = 0.0;
};

/// Sum over matchings of the inlier graph of p_tau (eps/delta)^(-|E|)
/// delta^(-|M|), with p_tau uniform over all matchings of the full graph.
/// Throws LimitError when the full graph exceeds `cap` edges.
LikelihoodValue exact_likelihood(const AssociationGraph& graph, const InlierGraph& inliers,
                                 const MechanismConfig& config, std::size_t cap = 20);

struct ApproxLogLikelihood {
  double value = 0.0;                    // log N* + |M*| log(1/delta), or |M*| term only
  std::size_t max_cardinality = 0;       // |M*|
  std::optional<std::uint64_t> num_max;  // N*, nullopt when the cap was exceeded
};

ApproxLogLikelihood approx_log_likelihood(const AssociationGraph& graph, const InlierGraph& inliers,
                                          const MechanismConfig& config, std::size_t cap = 20);

struct HypothesisScore {
  Mechanism mechanism = Mechanism::kCm;
  double score = 0.0;
  InlierGraph inliers;
  std::size_t matching_size = 0;  // MCM only
  HcmWeights weights;             // HCM only
};

/// Standalone scorer. `assignment` is required for HCM.
HypothesisScore score_hypothesis(const AssociationGraph& graph, const RelativePose& pose,
                                 const MechanismConfig& config, Mechanism mechanism,
                                 const ProbabilityAssignment* assignment = nullptr);

}  // namespace m2m
