#include "m2m/mechanisms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "m2m/error.hpp"

namespace m2m {

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kCm: return "cm";
    case Mechanism::kMcm: return "mcm";
    case Mechanism::kHcm: return "hcm";
    case Mechanism::kMcmThenHcm: return "mcm-hcm";
  }
  return "?";
}

std::optional<Mechanism> parse_mechanism(std::string_view name) {
  for (Mechanism m : {Mechanism::kCm, Mechanism::kMcm, Mechanism::kHcm, Mechanism::kMcmThenHcm}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

void MechanismConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < outlier_range)) {
    throw InputError("need 0 < epsilon < outlier_range");
  }
  if (!(p_x > 0.0 && p_x < 1.0) || !(p_y > 0.0 && p_y < 1.0)) {
    throw InputError("p_x and p_y must lie in (0, 1)");
  }
}

double likelihood_ratio_constant(double p, double delta) { return p / (1.0 - p) / delta; }

InlierGraph make_inlier_graph(const AssociationGraph& graph, std::vector<std::size_t> edges) {
  InlierGraph g;
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  for (std::size_t e : g.edges) {
    g.left.push_back(graph.edge(e).i);
    g.right.push_back(graph.edge(e).j);
  }
  for (auto* v : {&g.left, &g.right}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return g;
}

InlierGraph identify_inliers(const AssociationGraph& graph, const RelativePose& pose,
                             const MechanismConfig& config, double tol) {
  if (!graph.has_bearings()) throw InputError("graph has no bearings");
  const CameraFrames f = canonical_frames(pose);
  std::vector<Polar> left(graph.num_left());
  std::vector<Polar> right(graph.num_right());
  for (std::size_t i = 0; i < left.size(); ++i) left[i] = polar(f.R1 * graph.left()[i]);
  for (std::size_t j = 0; j < right.size(); ++j) right[j] = polar(f.R2 * graph.right()[j]);

  std::vector<std::size_t> in;
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const Edge& ed = graph.edge(e);
    if (angular_residual(left[ed.i], right[ed.j], tol) < config.epsilon) in.push_back(e);
  }
  return make_inlier_graph(graph, std::move(in));
}

MatchingResult max_matching_cardinality(const AssociationGraph& graph, const InlierGraph& inliers) {
  return max_matching(graph, inliers.edges);
}

HcmWeights hcm_weights(const AssociationGraph& graph, const InlierGraph& inliers,
                       const ProbabilityAssignment& assignment) {
  HcmWeights w;
  w.left.assign(graph.num_left(), 0.0);
  w.right.assign(graph.num_right(), 0.0);
  for (std::size_t e : inliers.edges) {
    const Edge& ed = graph.edge(e);
    const double px = assignment.left_total[ed.i];
    const double py = assignment.right_total[ed.j];
    if (!(px > 0.0) || !(py > 0.0)) {
      if (assignment.edge_prob[e] <= 0.0) continue;
      throw InputError("degenerate assignment: inlier vertex with zero assigned probability");
    }
    w.left[ed.i] += assignment.edge_prob[e] / px;
    w.right[ed.j] += assignment.edge_prob[e] / py;
  }
  return w;
}

double hcm_score(const HcmWeights& weights, const MechanismConfig& config) {
  const double cx = config.c_x();
  const double cy = config.c_y();
  double s = 0.0;
  for (double w : weights.left) s += std::log1p(cx * w);
  for (double w : weights.right) s += std::log1p(cy * w);
  return s;
}

double HcmEvaluator::run(const AssociationGraph& graph, std::span<const std::size_t> inlier_edges,
                         const ProbabilityAssignment& assignment, const MechanismConfig& config) {
  const std::size_t nv_left = graph.num_left();
  const std::size_t nv_right = graph.num_right();
  if (wx_.size() < nv_left) wx_.resize(nv_left, 0.0);
  if (wy_.size() < nv_right) wy_.resize(nv_right, 0.0);
  if (touched_left_.size() < nv_left) touched_left_.resize(nv_left);
  if (touched_right_.size() < nv_right) touched_right_.resize(nv_right);

  // With at least as many inliers as vertices a full vertex scan is no more
  // expensive than tracking the touched ones.
  const bool dense = inlier_edges.size() >= nv_left + nv_right;
  std::size_t nl = 0;
  std::size_t nr = 0;
  if (dense) {
    for (std::size_t e : inlier_edges) {
      const Edge& ed = graph.edge(e);
      const double p = std::max(assignment.edge_prob[e], 0.0);
      wx_[ed.i] += p;
      wy_[ed.j] += p;
    }
  } else {
    // Branch-free first-touch bookkeeping; each vertex is recorded once.
    for (std::size_t e : inlier_edges) {
      const Edge& ed = graph.edge(e);
      const double p = std::max(assignment.edge_prob[e], 0.0);
      touched_left_[nl] = ed.i;
      nl += static_cast<std::size_t>((wx_[ed.i] == 0.0) & (p > 0.0));
      touched_right_[nr] = ed.j;
      nr += static_cast<std::size_t>((wy_[ed.j] == 0.0) & (p > 0.0));
      wx_[ed.i] += p;
      wy_[ed.j] += p;
    }
  }

  // Factors 1 + C w are multiplied in four lanes and logged once per block;
  // a block of at most `block` factors cannot overflow.
  const double cx = config.c_x();
  const double cy = config.c_y();
  const double fmax = 1.0 + std::max(cx, cy);
  const std::size_t block =
      fmax > 1e75 ? 1 : static_cast<std::size_t>(std::clamp(690.0 / std::log(fmax), 1.0, 256.0));
  double s = 0.0;
  const auto accumulate = [&](std::size_t count, auto vertex, std::vector<double>& w,
                              const std::vector<double>& total, double c) {
    const auto take = [&](std::size_t k) {
      const Index v = vertex(k);
      const double f = w[v] > 0.0 ? 1.0 + c * w[v] / total[v] : 1.0;
      w[v] = 0.0;
      return f;
    };
    for (std::size_t k = 0; k < count; k += block) {
      const std::size_t end = std::min(count, k + block);
      std::array<double, 4> q{1.0, 1.0, 1.0, 1.0};
      std::size_t m = k;
      for (; m + 4 <= end; m += 4) {
        for (std::size_t l = 0; l < 4; ++l) q[l] *= take(m + l);
      }
      for (; m < end; ++m) q[0] *= take(m);
      s += std::log((q[0] * q[1]) * (q[2] * q[3]));
    }
  };
  if (dense) {
    const auto id = [](std::size_t k) { return static_cast<Index>(k); };
    accumulate(nv_left, id, wx_, assignment.left_total, cx);
    accumulate(nv_right, id, wy_, assignment.right_total, cy);
  } else {
    accumulate(nl, [&](std::size_t k) { return touched_left_[k]; }, wx_, assignment.left_total, cx);
    accumulate(nr, [&](std::size_t k) { return touched_right_[k]; }, wy_, assignment.right_total, cy);
  }
  return s;
}

double conditional_likelihood(std::size_t num_edges, std::size_t matching_size,
                              const MechanismConfig& config) {
  return std::pow(config.outlier_range, -static_cast<double>(num_edges)) *
         std::pow(1.0 / config.delta(), static_cast<double>(matching_size));
}

LikelihoodValue exact_likelihood(const AssociationGraph& graph, const InlierGraph& inliers,
                                 const MechanismConfig& config, std::size_t cap) {
  std::vector<std::size_t> all(graph.num_edges());
  for (std::size_t e = 0; e < all.size(); ++e) all[e] = e;
  const auto total_hist = matching_size_histogram(graph, all, cap);
  const auto in_hist = matching_size_histogram(graph, inliers.edges, cap);

  double total = 0.0;
  for (std::uint64_t c : total_hist) total += static_cast<double>(c);

  // log-sum-exp over sizes of log N_k + k log(1/delta)
  const double log_inv_delta = -std::log(config.delta());
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < in_hist.size(); ++k) {
    if (in_hist[k] > 0) peak = std::max(peak, std::log(static_cast<double>(in_hist[k])) + k * log_inv_delta);
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < in_hist.size(); ++k) {
    if (in_hist[k] > 0) acc += std::exp(std::log(static_cast<double>(in_hist[k])) + k * log_inv_delta - peak);
  }
  LikelihoodValue out;
  out.log_value = peak + std::log(acc) - std::log(total) -
                  static_cast<double>(graph.num_edges()) * std::log(config.outlier_range);
  out.value = std::exp(out.log_value);
  return out;
}

ApproxLogLikelihood approx_log_likelihood(const AssociationGraph& graph, const InlierGraph& inliers,
                                          const MechanismConfig& config, std::size_t cap) {
  ApproxLogLikelihood out;
  out.max_cardinality = max_matching(graph, inliers.edges).cardinality;
  const double size_term = static_cast<double>(out.max_cardinality) * -std::log(config.delta());
  if (inliers.edges.size() <= cap) {
    const auto hist = matching_size_histogram(graph, inliers.edges, cap);
    out.num_max = hist.at(out.max_cardinality);
    out.value = std::log(static_cast<double>(*out.num_max)) + size_term;
  } else {
    out.value = size_term;
  }
  return out;
}

HypothesisScore score_hypothesis(const AssociationGraph& graph, const RelativePose& pose,
                                 const MechanismConfig& config, Mechanism mechanism,
                                 const ProbabilityAssignment* assignment) {
  HypothesisScore out;
  out.mechanism = mechanism;
  out.inliers = identify_inliers(graph, pose, config);
  switch (mechanism) {
    case Mechanism::kCm:
      out.score = static_cast<double>(cm_score(out.inliers));
      break;
    case Mechanism::kMcm:
      out.matching_size = max_matching_cardinality(graph, out.inliers).cardinality;
      out.score = static_cast<double>(out.matching_size);
      break;
    case Mechanism::kHcm:
    case Mechanism::kMcmThenHcm:
      if (assignment == nullptr) throw InputError("HCM scoring needs a probability assignment");
      out.weights = hcm_weights(graph, out.inliers, *assignment);
      out.score = hcm_score(out.weights, config);
      if (mechanism == Mechanism::kMcmThenHcm) {
        out.matching_size = max_matching_cardinality(graph, out.inliers).cardinality;
      }
      break;
  }
  return out;
}

}  // namespace m2m
