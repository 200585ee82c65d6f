#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "m2m/association.hpp"
#include "m2m/geometry.hpp"
#include "m2m/mechanisms.hpp"

namespace m2m {

enum class EventKind : std::uint8_t { kEnter = 0, kExit = 1 };

/// One endpoint of an edge's feasible phi arc.
struct IntervalEvent {
  double phi = 0.0;
  EventKind kind = EventKind::kEnter;
  std::size_t edge = 0;
  Index left = 0;
  Index right = 0;
  double prob = 0.0;
};

/// phi ascending, enter before exit, then edge id.
bool event_less(const IntervalEvent& a, const IntervalEvent& b);
void sort_events(std::vector<IntervalEvent>& events);

/// Appends an enter/exit pair per arc.
void append_arc_events(std::vector<IntervalEvent>& events, const ArcSet& arcs, std::size_t edge_id,
                       const Edge& edge, double prob);

/// Sorted events for every edge of `graph` under (v1, v2). Probabilities are
/// taken from `probs` when given, otherwise from the edges.
std::vector<IntervalEvent> build_events(const AssociationGraph& graph, const Vec2& v1, const Vec2& v2,
                                        double epsilon, std::span<const double> probs = {});

/// Events from explicit intervals [lo, hi] (test and benchmark helper). Edge
/// k gets left/right ids from `edges[k]`.
std::vector<IntervalEvent> events_from_intervals(std::span<const Arc> intervals,
                                                 std::span<const Edge> edges);

/// A score attained on the closed endpoint `phi`; `phi_mid` lies strictly
/// inside the same active set when the next event has a larger phi.
struct SweepPoint {
  double score = 0.0;
  double phi = 0.0;
  double phi_mid = 0.0;
  std::size_t event = 0;
};

struct SweepOptions {
  double tie_rel_tol = 1e-9;
  std::size_t max_ties = 4096;
  bool collect_ties = false;
  /// When set, receives the score after every event.
  std::vector<double>* trace = nullptr;
};

struct SweepResult {
  double score = 0.0;  // 0 with phi = 0 when there are no events
  double phi = 0.0;
  double phi_mid = 0.0;
  std::size_t event = std::numeric_limits<std::size_t>::max();
  std::vector<SweepPoint> ties;  // points within tolerance of `score`, in sweep order
  bool tie_overflow = false;
};

inline double tie_tolerance(double score, double rel_tol) {
  return rel_tol * (score < 0 ? (-score > 1.0 ? -score : 1.0) : (score > 1.0 ? score : 1.0));
}

/// Interval stabbing. Earliest endpoint wins ties.
SweepResult sweep_cm(std::span<const IntervalEvent> events, const SweepOptions& options = {});

/// Incremental HCM over sorted events, using the assigned vertex totals.
SweepResult sweep_hcm(std::span<const IntervalEvent> events, std::span<const double> left_total,
                      std::span<const double> right_total, const MechanismConfig& config,
                      const SweepOptions& options = {});

/// Maximum-cardinality matching maintained under edge insertion/deletion.
/// Insertion tries one augmenting path; deleting a matched edge tries one
/// re-augmentation. Vertex ids are global and may be sparse.
class DynamicMatching {
 public:
  void reset(std::size_t num_left, std::size_t num_right);
  void insert(std::size_t edge, Index left, Index right);
  void erase(std::size_t edge, Index left, Index right);
  std::size_t size() const { return size_; }
  bool clean() const { return size_ == 0 && active_left_.empty(); }
  std::size_t num_left() const { return adj_.size(); }
  std::size_t num_right() const { return match_right_.size(); }
  /// Edge ids of the current matching, unsorted.
  std::vector<std::size_t> matching() const;

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  struct Adj {
    std::size_t edge;
    Index right;
  };

  bool augment_once();
  bool try_kuhn(Index u);

  std::vector<std::vector<Adj>> adj_;      // active edges per left vertex
  std::vector<std::size_t> match_left_;    // edge id or kNone
  std::vector<Index> mate_right_;          // left vertex, valid when match_right_ is set
  std::vector<std::size_t> match_right_;   // edge id or kNone
  std::vector<Index> active_left_;         // left vertices with at least one active edge
  std::vector<std::uint32_t> visit_stamp_;
  std::uint32_t stamp_ = 0;
  std::size_t size_ = 0;
};

/// Sweep keeping the matching of the active edges maximum at every event.
/// `num_left`/`num_right` bound the vertex ids in the events.
SweepResult sweep_mcm(std::span<const IntervalEvent> events, std::size_t num_left,
                      std::size_t num_right, const SweepOptions& options = {});

/// Reusable buffers for repeated sweeps; after a balanced event set the
/// state is back to empty, so consecutive sweeps do not reinitialise.
class SweepWorkspace {
 public:
  SweepResult cm(std::span<const IntervalEvent> events, const SweepOptions& options = {});
  SweepResult hcm(std::span<const IntervalEvent> events, std::span<const double> left_total,
                  std::span<const double> right_total, const MechanismConfig& config,
                  const SweepOptions& options = {});
  SweepResult mcm(std::span<const IntervalEvent> events, std::size_t num_left, std::size_t num_right,
                  const SweepOptions& options = {});

 private:
  std::vector<double> wx_;
  std::vector<double> wy_;
  DynamicMatching matching_;
};

}  // namespace m2m
