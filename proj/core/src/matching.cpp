#include "m2m/matching.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "m2m/error.hpp"

namespace m2m {

namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

void check_cap(std::size_t edges, std::size_t cap) {
  if (edges > cap) {
    std::ostringstream os;
    os << "matching enumeration refused: " << edges << " edges exceeds cap " << cap;
    throw LimitError(os.str());
  }
}

std::vector<std::size_t> all_edges(const AssociationGraph& graph) {
  std::vector<std::size_t> ids(graph.num_edges());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return ids;
}

// Branch on each edge in order: skip it, or take it when both ends are free.
template <typename Visit>
void branch(const AssociationGraph& graph, std::span<const std::size_t> ids, std::size_t pos,
            std::vector<char>& used_left, std::vector<char>& used_right,
            std::vector<std::size_t>& current, Visit& visit) {
  if (pos == ids.size()) {
    visit(current);
    return;
  }
  branch(graph, ids, pos + 1, used_left, used_right, current, visit);
  const Edge& e = graph.edge(ids[pos]);
  if (!used_left[e.i] && !used_right[e.j]) {
    used_left[e.i] = used_right[e.j] = 1;
    current.push_back(ids[pos]);
    branch(graph, ids, pos + 1, used_left, used_right, current, visit);
    current.pop_back();
    used_left[e.i] = used_right[e.j] = 0;
  }
}

}  // namespace

std::size_t HopcroftKarp::run(const AssociationGraph& graph, std::span<const std::size_t> edge_ids,
                              std::vector<std::size_t>* witness) {
  if (left_local_.size() < graph.num_left()) left_local_.resize(graph.num_left(), kNone);
  if (right_local_.size() < graph.num_right()) right_local_.resize(graph.num_right(), kNone);
  left_ids_.clear();
  right_ids_.clear();
  for (std::size_t e : edge_ids) {
    const Edge& ed = graph.edge(e);
    if (left_local_[ed.i] == kNone) {
      left_local_[ed.i] = static_cast<std::uint32_t>(left_ids_.size());
      left_ids_.push_back(ed.i);
    }
    if (right_local_[ed.j] == kNone) {
      right_local_[ed.j] = static_cast<std::uint32_t>(right_ids_.size());
      right_ids_.push_back(ed.j);
    }
  }
  const std::size_t nl = left_ids_.size();
  const std::size_t nr = right_ids_.size();

  offsets_.assign(nl + 1, 0);
  for (std::size_t e : edge_ids) ++offsets_[left_local_[graph.edge(e).i] + 1];
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  adj_.resize(edge_ids.size());
  adj_edge_.resize(edge_ids.size());
  cursor_.assign(offsets_.begin(), offsets_.end() - 1);
  for (std::size_t e : edge_ids) {
    const Edge& ed = graph.edge(e);
    const std::size_t slot = cursor_[left_local_[ed.i]]++;
    adj_[slot] = right_local_[ed.j];
    adj_edge_[slot] = e;
  }

  match_left_.assign(nl, kNone);
  match_right_.assign(nr, kNone);
  match_edge_.assign(nl, 0);
  dist_.assign(nl, kNone);

  std::size_t size = 0;
  while (bfs()) {
    cursor_.assign(offsets_.begin(), offsets_.end() - 1);
    for (std::uint32_t u = 0; u < nl; ++u) {
      if (match_left_[u] == kNone && dfs(u)) ++size;
    }
  }

  if (witness != nullptr) {
    witness->clear();
    for (std::uint32_t u = 0; u < nl; ++u) {
      if (match_left_[u] != kNone) witness->push_back(match_edge_[u]);
    }
    std::sort(witness->begin(), witness->end());
  }
  for (Index i : left_ids_) left_local_[i] = kNone;
  for (Index j : right_ids_) right_local_[j] = kNone;
  return size;
}

bool HopcroftKarp::bfs() {
  queue_.clear();
  for (std::uint32_t u = 0; u < match_left_.size(); ++u) {
    if (match_left_[u] == kNone) {
      dist_[u] = 0;
      queue_.push_back(u);
    } else {
      dist_[u] = kNone;
    }
  }
  bool found = false;
  for (std::size_t h = 0; h < queue_.size(); ++h) {
    const std::uint32_t u = queue_[h];
    for (std::size_t s = offsets_[u]; s < offsets_[u + 1]; ++s) {
      const std::uint32_t w = match_right_[adj_[s]];
      if (w == kNone) {
        found = true;
      } else if (dist_[w] == kNone) {
        dist_[w] = dist_[u] + 1;
        queue_.push_back(w);
      }
    }
  }
  return found;
}

bool HopcroftKarp::dfs(std::size_t u) {
  for (std::size_t& s = cursor_[u]; s < offsets_[u + 1]; ++s) {
    const std::uint32_t v = adj_[s];
    const std::uint32_t w = match_right_[v];
    if (w == kNone || (dist_[w] == dist_[u] + 1 && dfs(w))) {
      match_left_[u] = v;
      match_right_[v] = static_cast<std::uint32_t>(u);
      match_edge_[u] = adj_edge_[s];
      return true;
    }
  }
  dist_[u] = kNone;
  return false;
}

MatchingResult max_matching(const AssociationGraph& graph, std::span<const std::size_t> edge_ids) {
  HopcroftKarp hk;
  MatchingResult out;
  out.cardinality = hk.run(graph, edge_ids, &out.edges);
  return out;
}

MatchingResult max_matching(const AssociationGraph& graph) {
  const auto ids = all_edges(graph);
  return max_matching(graph, ids);
}

std::vector<std::vector<std::size_t>> enumerate_matchings(const AssociationGraph& graph,
                                                          std::span<const std::size_t> edge_ids,
                                                          std::size_t cap) {
  check_cap(edge_ids.size(), cap);
  std::vector<std::vector<std::size_t>> out;
  std::vector<char> used_left(graph.num_left(), 0);
  std::vector<char> used_right(graph.num_right(), 0);
  std::vector<std::size_t> current;
  auto visit = [&](const std::vector<std::size_t>& m) { out.push_back(m); };
  branch(graph, edge_ids, 0, used_left, used_right, current, visit);
  return out;
}

std::vector<std::vector<std::size_t>> enumerate_matchings(const AssociationGraph& graph,
                                                          std::size_t cap) {
  const auto ids = all_edges(graph);
  return enumerate_matchings(graph, ids, cap);
}

std::vector<std::uint64_t> matching_size_histogram(const AssociationGraph& graph,
                                                   std::span<const std::size_t> edge_ids,
                                                   std::size_t cap) {
  check_cap(edge_ids.size(), cap);
  std::vector<std::uint64_t> counts(1, 0);
  std::vector<char> used_left(graph.num_left(), 0);
  std::vector<char> used_right(graph.num_right(), 0);
  std::vector<std::size_t> current;
  auto visit = [&](const std::vector<std::size_t>& m) {
    if (counts.size() <= m.size()) counts.resize(m.size() + 1, 0);
    ++counts[m.size()];
  };
  branch(graph, edge_ids, 0, used_left, used_right, current, visit);
  return counts;
}

}  // namespace m2m
