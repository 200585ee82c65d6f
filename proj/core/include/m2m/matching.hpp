#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "m2m/association.hpp"

namespace m2m {

struct MatchingResult {
  std::size_t cardinality = 0;
  std::vector<std::size_t> edges;  // witness matching, sorted edge indices
};

/// Hopcroft-Karp over a subset of a graph's edges. Scratch buffers are kept
/// between calls so repeated evaluations do not allocate.
class HopcroftKarp {
 public:
  std::size_t run(const AssociationGraph& graph, std::span<const std::size_t> edge_ids,
                  std::vector<std::size_t>* witness = nullptr);

 private:
  bool bfs();
  bool dfs(std::size_t u);

  std::vector<std::size_t> offsets_;  // CSR over local left ids
  std::vector<std::uint32_t> adj_;    // local right id per slot
  std::vector<std::size_t> adj_edge_;
  std::vector<std::uint32_t> left_local_;   // global -> local, or kNone
  std::vector<std::uint32_t> right_local_;
  std::vector<Index> left_ids_;
  std::vector<Index> right_ids_;
  std::vector<std::uint32_t> match_left_;   // local right id
  std::vector<std::uint32_t> match_right_;  // local left id
  std::vector<std::size_t> match_edge_;
  std::vector<std::uint32_t> dist_;
  std::vector<std::size_t> cursor_;
  std::vector<std::uint32_t> queue_;
};

/// Maximum-cardinality matching of the subgraph formed by `edge_ids`.
MatchingResult max_matching(const AssociationGraph& graph, std::span<const std::size_t> edge_ids);
MatchingResult max_matching(const AssociationGraph& graph);

/// Every matching (edge subsets with disjoint endpoints, including the empty
/// one) of the subgraph `edge_ids`. Throws LimitError above `cap` edges.
std::vector<std::vector<std::size_t>> enumerate_matchings(const AssociationGraph& graph,
                                                          std::span<const std::size_t> edge_ids,
                                                          std::size_t cap = 20);
std::vector<std::vector<std::size_t>> enumerate_matchings(const AssociationGraph& graph,
                                                          std::size_t cap = 20);

/// counts[k] = number of matchings with k edges. Same cap semantics.
std::vector<std::uint64_t> matching_size_histogram(const AssociationGraph& graph,
                                                   std::span<const std::size_t> edge_ids,
                                                   std::size_t cap = 20);

}  // namespace m2m
