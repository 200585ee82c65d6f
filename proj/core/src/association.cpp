#include "m2m/association.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "m2m/error.hpp"

namespace m2m {

namespace {

void check_edges(std::vector<Edge>& edges, std::size_t nl, std::size_t nr) {
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Edge& ed = edges[e];
    if (ed.i >= nl || ed.j >= nr) {
      std::ostringstream os;
      os << "edge (" << ed.i << ", " << ed.j << ") out of range for " << nl << " x " << nr
         << " features";
      throw InputError(os.str());
    }
    if (e > 0 && edges[e - 1].i == ed.i && edges[e - 1].j == ed.j) {
      std::ostringstream os;
      os << "duplicate edge (" << ed.i << ", " << ed.j << ")";
      throw InputError(os.str());
    }
    if (!(ed.similarity >= -1.0 - 1e-12 && ed.similarity <= 1.0 + 1e-12)) {
      throw InputError("edge similarity outside [-1, 1]");
    }
    if (!(ed.prob >= 0.0 && ed.prob <= 1.0)) {
      throw InputError("edge probability outside [0, 1]");
    }
  }
}

void check_bearings(const std::vector<Bearing>& bearings, const char* side) {
  for (std::size_t k = 0; k < bearings.size(); ++k) {
    if (!bearings[k].allFinite() || std::abs(bearings[k].norm() - 1.0) > 1e-9) {
      std::ostringstream os;
      os << side << " bearing " << k << " is not unit length";
      throw InputError(os.str());
    }
  }
}

// Indices of the k best scores, ordered by descending score then index.
std::vector<Index> top_k(const Eigen::VectorXd& scores, std::size_t k) {
  std::vector<Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  const auto better = [&](Index a, Index b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  const std::size_t keep = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), better);
  idx.resize(keep);
  return idx;
}

Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& desc, const char* side) {
  Eigen::MatrixXd out = desc;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      std::ostringstream os;
      os << side << " descriptor " << r << " has zero or non-finite norm";
      throw InputError(os.str());
    }
    out.row(r) /= n;
  }
  return out;
}

}  // namespace

AssociationGraph::AssociationGraph(std::size_t num_left, std::size_t num_right,
                                   std::vector<Edge> edges)
    : num_left_(num_left), num_right_(num_right), has_bearings_(num_left == 0 && num_right == 0),
      edges_(std::move(edges)) {
  check_edges(edges_, num_left_, num_right_);
  build_index();
}

AssociationGraph::AssociationGraph(std::vector<Bearing> left, std::vector<Bearing> right,
                                   std::vector<Edge> edges)
    : num_left_(left.size()), num_right_(right.size()), has_bearings_(true),
      left_(std::move(left)), right_(std::move(right)), edges_(std::move(edges)) {
  check_bearings(left_, "left");
  check_bearings(right_, "right");
  check_edges(edges_, num_left_, num_right_);
  build_index();
}

void AssociationGraph::build_index() {
  left_offsets_.assign(num_left_ + 1, 0);
  right_offsets_.assign(num_right_ + 1, 0);
  for (const Edge& e : edges_) {
    ++left_offsets_[e.i + 1];
    ++right_offsets_[e.j + 1];
  }
  std::partial_sum(left_offsets_.begin(), left_offsets_.end(), left_offsets_.begin());
  std::partial_sum(right_offsets_.begin(), right_offsets_.end(), right_offsets_.begin());
  left_adj_.resize(edges_.size());
  right_adj_.resize(edges_.size());
  std::vector<std::size_t> lfill(left_offsets_.begin(), left_offsets_.end() - 1);
  std::vector<std::size_t> rfill(right_offsets_.begin(), right_offsets_.end() - 1);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    left_adj_[lfill[edges_[e].i]++] = e;
    right_adj_[rfill[edges_[e].j]++] = e;
  }
}

std::span<const std::size_t> AssociationGraph::left_neighbors(std::size_t i) const {
  return {left_adj_.data() + left_offsets_[i], left_offsets_[i + 1] - left_offsets_[i]};
}

std::span<const std::size_t> AssociationGraph::right_neighbors(std::size_t j) const {
  return {right_adj_.data() + right_offsets_[j], right_offsets_[j + 1] - right_offsets_[j]};
}

std::optional<std::size_t> AssociationGraph::find_edge(Index i, Index j) const {
  if (i >= num_left_ || j >= num_right_) return std::nullopt;
  for (std::size_t e : left_neighbors(i)) {
    if (edges_[e].j == j) return e;
  }
  return std::nullopt;
}

std::size_t AssociationGraph::max_left_degree() const {
  std::size_t d = 0;
  for (std::size_t i = 0; i < num_left_; ++i) d = std::max(d, left_offsets_[i + 1] - left_offsets_[i]);
  return d;
}

std::size_t AssociationGraph::max_right_degree() const {
  std::size_t d = 0;
  for (std::size_t j = 0; j < num_right_; ++j) d = std::max(d, right_offsets_[j + 1] - right_offsets_[j]);
  return d;
}

AssociationGraph AssociationGraph::with_probabilities(std::span<const double> probs) const {
  if (probs.size() != edges_.size()) throw InputError("probability count does not match edge count");
  AssociationGraph out = *this;
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    if (!(probs[e] >= 0.0 && probs[e] <= 1.0)) throw InputError("edge probability outside [0, 1]");
    out.edges_[e].prob = probs[e];
  }
  return out;
}

AssociationGraph AssociationGraph::subgraph(std::span<const std::size_t> edge_ids) const {
  std::vector<Edge> kept;
  kept.reserve(edge_ids.size());
  for (std::size_t e : edge_ids) kept.push_back(edges_.at(e));
  if (has_bearings_) return AssociationGraph(left_, right_, std::move(kept));
  return AssociationGraph(num_left_, num_right_, std::move(kept));
}

void GroundTruth::validate() const {
  std::set<Index> seen_left;
  std::set<Index> seen_right;
  for (const auto& [i, j] : matches) {
    if (!seen_left.insert(i).second || !seen_right.insert(j).second) {
      throw InputError("ground-truth matches are not a matching");
    }
  }
}

std::vector<Edge> build_mknn(const Eigen::MatrixXd& left_desc, const Eigen::MatrixXd& right_desc,
                             const MknnOptions& options) {
  if (options.k == 0) throw InputError("MKNN requires K >= 1");
  if (left_desc.rows() == 0 || right_desc.rows() == 0) return {};
  if (left_desc.cols() != right_desc.cols()) throw InputError("descriptor dimensions differ");

  const Eigen::MatrixXd L = normalized_rows(left_desc, "left");
  const Eigen::MatrixXd R = normalized_rows(right_desc, "right");
  const Eigen::MatrixXd sim = L * R.transpose();

  std::vector<std::vector<Index>> right_top(static_cast<std::size_t>(sim.cols()));
  for (Eigen::Index j = 0; j < sim.cols(); ++j) {
    right_top[static_cast<std::size_t>(j)] = top_k(sim.col(j), options.k);
  }

  std::vector<Edge> edges;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    const Eigen::VectorXd row = sim.row(i).transpose();
    for (Index j : top_k(row, options.k)) {
      const double s = std::clamp(sim(i, j), -1.0, 1.0);
      if (s < options.min_similarity) continue;
      const auto& back = right_top[j];
      if (std::find(back.begin(), back.end(), static_cast<Index>(i)) == back.end()) continue;
      edges.push_back(Edge{static_cast<Index>(i), j, s, 0.0});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  if (options.max_edges > 0) edges = cap_edges(std::move(edges), options.max_edges);
  return edges;
}

std::vector<Edge> cap_edges(std::vector<Edge> edges, std::size_t max_edges) {
  if (edges.size() <= max_edges) return edges;
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Edge& ea = edges[a];
    const Edge& eb = edges[b];
    if (ea.similarity != eb.similarity) return ea.similarity > eb.similarity;
    return ea.i != eb.i ? ea.i < eb.i : ea.j < eb.j;
  });
  order.resize(max_edges);
  std::sort(order.begin(), order.end());
  std::vector<Edge> out;
  out.reserve(max_edges);
  for (std::size_t k : order) out.push_back(edges[k]);
  return out;
}

std::vector<Component> connected_components(const AssociationGraph& graph) {
  const std::size_t nl = graph.num_left();
  const std::size_t n = nl + graph.num_right();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&](std::size_t v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  for (const Edge& e : graph.edges()) {
    const std::size_t a = find(e.i);
    const std::size_t b = find(nl + e.j);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  // Roots are the smallest vertex id in each set; left ids precede right ids,
  // so ordering by root orders by smallest left index.
  std::vector<std::size_t> slot(n, static_cast<std::size_t>(-1));
  std::vector<std::size_t> roots;
  for (const Edge& e : graph.edges()) {
    const std::size_t r = find(e.i);
    if (slot[r] == static_cast<std::size_t>(-1)) {
      slot[r] = 0;
      roots.push_back(r);
    }
  }
  std::sort(roots.begin(), roots.end());
  std::vector<Component> comps(roots.size());
  for (std::size_t c = 0; c < roots.size(); ++c) slot[roots[c]] = c;

  std::vector<char> seen_left(nl, 0);
  std::vector<char> seen_right(graph.num_right(), 0);
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const Edge& ed = graph.edge(e);
    Component& c = comps[slot[find(ed.i)]];
    c.edges.push_back(e);
    if (!seen_left[ed.i]) {
      seen_left[ed.i] = 1;
      c.left.push_back(ed.i);
    }
    if (!seen_right[ed.j]) {
      seen_right[ed.j] = 1;
      c.right.push_back(ed.j);
    }
  }
  for (Component& c : comps) {
    std::sort(c.left.begin(), c.left.end());
    std::sort(c.right.begin(), c.right.end());
  }
  return comps;
}

std::optional<double> group_precision(const AssociationGraph& graph, const GroundTruth& gt,
                                      Side side) {
  std::size_t matched = 0;
  std::size_t contained = 0;
  for (const auto& [i, j] : gt.matches) {
    const std::size_t v = side == Side::kLeft ? i : j;
    const std::size_t limit = side == Side::kLeft ? graph.num_left() : graph.num_right();
    if (v >= limit) throw InputError("ground-truth match index out of range");
    ++matched;
    if (graph.find_edge(i, j)) ++contained;
  }
  if (matched == 0) return std::nullopt;
  return static_cast<double>(contained) / static_cast<double>(matched);
}

AssociationMetrics association_metrics(std::span<const MatchPair> output, const GroundTruth& gt) {
  const std::set<MatchPair> truth(gt.matches.begin(), gt.matches.end());
  const std::set<MatchPair> unique(output.begin(), output.end());
  AssociationMetrics m;
  for (const MatchPair& p : unique) m.correct += truth.count(p);
  m.precision = unique.empty() ? 0.0 : static_cast<double>(m.correct) / static_cast<double>(unique.size());
  m.recall = truth.empty() ? 0.0 : static_cast<double>(m.correct) / static_cast<double>(truth.size());
  m.success = m.correct >= kMinCorrectForSuccess;
  return m;
}

}  // namespace m2m
