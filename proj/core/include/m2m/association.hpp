#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "m2m/geometry.hpp"

namespace m2m {

using Index = std::uint32_t;

/// Unit bearing of one image feature in its camera frame.
using Bearing = Vec3;

/// Candidate association between left feature `i` and right feature `j`.
struct Edge {
  Index i = 0;
  Index j = 0;
  double similarity = 0.0;  // cosine similarity, [-1, 1]
  double prob = 0.0;        // marginal probability, [0, 1]; 0 until assigned

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Bipartite association graph. Edges are kept sorted by (i, j) and the
/// per-vertex neighbour lists hold edge indices in that order. Immutable
/// after construction.
class AssociationGraph {
 public:
  AssociationGraph() = default;

  /// Topology-only graph (no bearings); geometry operations reject it.
  AssociationGraph(std::size_t num_left, std::size_t num_right, std::vector<Edge> edges);

  /// Graph over bearings; each bearing must be unit length within 1e-9.
  AssociationGraph(std::vector<Bearing> left, std::vector<Bearing> right, std::vector<Edge> edges);

  std::size_t num_left() const { return num_left_; }
  std::size_t num_right() const { return num_right_; }
  std::size_t num_edges() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }
  bool has_bearings() const { return has_bearings_; }

  const std::vector<Bearing>& left() const { return left_; }
  const std::vector<Bearing>& right() const { return right_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::size_t e) const { return edges_[e]; }

  /// Edge indices incident to left vertex i (the set N_i).
  std::span<const std::size_t> left_neighbors(std::size_t i) const;
  /// Edge indices incident to right vertex j (the set N_j).
  std::span<const std::size_t> right_neighbors(std::size_t j) const;

  std::optional<std::size_t> find_edge(Index i, Index j) const;
  std::size_t max_left_degree() const;
  std::size_t max_right_degree() const;

  /// Copy with per-edge probabilities replaced.
  AssociationGraph with_probabilities(std::span<const double> probs) const;
  /// Copy restricted to the given edges (vertices and bearings kept).
  AssociationGraph subgraph(std::span<const std::size_t> edge_ids) const;

 private:
  void build_index();

  std::size_t num_left_ = 0;
  std::size_t num_right_ = 0;
  bool has_bearings_ = true;
  std::vector<Bearing> left_;
  std::vector<Bearing> right_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> left_offsets_;
  std::vector<std::size_t> left_adj_;
  std::vector<std::size_t> right_offsets_;
  std::vector<std::size_t> right_adj_;
};

using MatchPair = std::pair<Index, Index>;

/// Known pose and correct correspondences; `matches` is a graph matching.
struct GroundTruth {
  RelativePose pose;
  std::vector<MatchPair> matches;

  /// Throws InputError when an index repeats on either side.
  void validate() const;
};

struct MknnOptions {
  std::size_t k = 5;
  double min_similarity = 0.7;
  /// Keep at most this many edges, dropping the lowest similarities; 0 = no cap.
  std::size_t max_edges = 0;
};

/// Mutual top-K nearest neighbours under cosine similarity. Rows of the
/// matrices are descriptors; they are normalised internally. Ties at the
/// top-K cut go to the lower index. Result is sorted by (i, j).
std::vector<Edge> build_mknn(const Eigen::MatrixXd& left_desc, const Eigen::MatrixXd& right_desc,
                             const MknnOptions& options = {});

/// Drop lowest-similarity edges (ties: larger (i, j) first) until at most
/// `max_edges` remain. Order of survivors is preserved.
std::vector<Edge> cap_edges(std::vector<Edge> edges, std::size_t max_edges);

/// Vertex-disjoint piece of an association graph.
struct Component {
  std::vector<Index> left;         // sorted
  std::vector<Index> right;        // sorted
  std::vector<std::size_t> edges;  // sorted edge indices
};

/// Edge-induced connected components, ordered by smallest left index.
/// Vertices without edges do not form components.
std::vector<Component> connected_components(const AssociationGraph& graph);

enum class Side { kLeft, kRight };

/// Fraction of ground-truth matched features on `side` whose candidate set
/// contains the true partner; nullopt when no feature on that side is matched.
std::optional<double> group_precision(const AssociationGraph& graph, const GroundTruth& gt,
                                      Side side);

struct AssociationMetrics {
  std::size_t correct = 0;
  double precision = 0.0;
  double recall = 0.0;
  bool success = false;  // at least kMinCorrectForSuccess correct associations
};

inline constexpr std::size_t kMinCorrectForSuccess = 5;

AssociationMetrics association_metrics(std::span<const MatchPair> output, const GroundTruth& gt);

}  // namespace m2m
