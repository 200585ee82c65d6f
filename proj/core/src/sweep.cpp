#include "m2m/sweep.hpp"

#include <algorithm>
#include <cmath>

#include "m2m/error.hpp"

namespace m2m {

bool event_less(const IntervalEvent& a, const IntervalEvent& b) {
  if (a.phi != b.phi) return a.phi < b.phi;
  if (a.kind != b.kind) return a.kind == EventKind::kEnter;
  return a.edge < b.edge;
}

void sort_events(std::vector<IntervalEvent>& events) {
  std::sort(events.begin(), events.end(), event_less);
}

void append_arc_events(std::vector<IntervalEvent>& events, const ArcSet& arcs, std::size_t edge_id,
                       const Edge& edge, double prob) {
  for (const Arc& a : arcs) {
    events.push_back({a.lo, EventKind::kEnter, edge_id, edge.i, edge.j, prob});
    events.push_back({a.hi, EventKind::kExit, edge_id, edge.i, edge.j, prob});
  }
}

std::vector<IntervalEvent> build_events(const AssociationGraph& graph, const Vec2& v1, const Vec2& v2,
                                        double epsilon, std::span<const double> probs) {
  if (!graph.has_bearings()) throw InputError("graph has no bearings");
  if (!probs.empty() && probs.size() != graph.num_edges()) {
    throw InputError("probability vector does not match edge count");
  }
  const Mat3 r1 = exp_so3(planar(v1));
  const Mat3 r2 = exp_so3(planar(v2));
  std::vector<Polar> left(graph.num_left());
  std::vector<Polar> right(graph.num_right());
  for (std::size_t i = 0; i < left.size(); ++i) left[i] = polar(r1 * graph.left()[i]);
  for (std::size_t j = 0; j < right.size(); ++j) right[j] = polar(r2 * graph.right()[j]);

  std::vector<IntervalEvent> events;
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const Edge& ed = graph.edge(e);
    const ArcSet arcs = feasible_phi_arcs(left[ed.i], right[ed.j], epsilon);
    append_arc_events(events, arcs, e, ed, probs.empty() ? ed.prob : probs[e]);
  }
  sort_events(events);
  return events;
}

std::vector<IntervalEvent> events_from_intervals(std::span<const Arc> intervals,
                                                 std::span<const Edge> edges) {
  std::vector<IntervalEvent> events;
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    const Edge& ed = edges[k];
    events.push_back({intervals[k].lo, EventKind::kEnter, k, ed.i, ed.j, ed.prob});
    events.push_back({intervals[k].hi, EventKind::kExit, k, ed.i, ed.j, ed.prob});
  }
  sort_events(events);
  return events;
}

namespace {

// Drives a state with enter(ev) -> score and exit(ev). Scores only rise on
// enter events, so maxima are read right after each enter.
template <typename State>
SweepResult run_sweep(std::span<const IntervalEvent> events, State& state,
                      const SweepOptions& options) {
  SweepResult out;
  bool have = false;
  for (std::size_t k = 0; k < events.size(); ++k) {
    const IntervalEvent& ev = events[k];
    if (ev.kind == EventKind::kExit) {
      state.exit(ev);
      if (options.trace != nullptr) options.trace->push_back(state.current());
      continue;
    }
    const double s = state.enter(ev);
    if (options.trace != nullptr) options.trace->push_back(s);
    const double next = k + 1 < events.size() ? events[k + 1].phi : ev.phi;
    const SweepPoint pt{s, ev.phi, 0.5 * (ev.phi + next), k};
    if (!have || s > out.score) {
      const bool clear = !have || s > out.score + tie_tolerance(out.score, options.tie_rel_tol);
      have = true;
      out.score = s;
      out.phi = pt.phi;
      out.phi_mid = pt.phi_mid;
      out.event = k;
      if (options.collect_ties) {
        if (clear) {
          out.ties.clear();
          out.tie_overflow = false;
        } else {
          const double floor = s - tie_tolerance(s, options.tie_rel_tol);
          std::erase_if(out.ties, [&](const SweepPoint& p) { return p.score < floor; });
        }
      }
    }
    if (options.collect_ties && s >= out.score - tie_tolerance(out.score, options.tie_rel_tol)) {
      if (out.ties.size() < options.max_ties) {
        out.ties.push_back(pt);
      } else {
        out.tie_overflow = true;
      }
    }
  }
  return out;
}

struct CmState {
  double count = 0.0;
  double enter(const IntervalEvent&) { return ++count; }
  void exit(const IntervalEvent&) { --count; }
  double current() const { return count; }
};

struct HcmState {
  std::span<const double> px;
  std::span<const double> py;
  double cx = 0.0;
  double cy = 0.0;
  std::vector<double>& wx;
  std::vector<double>& wy;
  double s = 0.0;

  void update(const IntervalEvent& ev, double sign) {
    if (ev.prob <= 0.0) return;
    const double ox = wx[ev.left];
    const double oy = wy[ev.right];
    const double nx = ox + sign * ev.prob / px[ev.left];
    const double ny = oy + sign * ev.prob / py[ev.right];
    s += std::log1p(cx * nx) - std::log1p(cx * ox);
    s += std::log1p(cy * ny) - std::log1p(cy * oy);
    wx[ev.left] = nx;
    wy[ev.right] = ny;
  }
  double enter(const IntervalEvent& ev) {
    update(ev, 1.0);
    return s;
  }
  void exit(const IntervalEvent& ev) { update(ev, -1.0); }
  double current() const { return s; }
};

struct McmState {
  DynamicMatching& m;
  double enter(const IntervalEvent& ev) {
    m.insert(ev.edge, ev.left, ev.right);
    return static_cast<double>(m.size());
  }
  void exit(const IntervalEvent& ev) { m.erase(ev.edge, ev.left, ev.right); }
  double current() const { return static_cast<double>(m.size()); }
};

}  // namespace

SweepResult sweep_cm(std::span<const IntervalEvent> events, const SweepOptions& options) {
  return SweepWorkspace().cm(events, options);
}

SweepResult sweep_hcm(std::span<const IntervalEvent> events, std::span<const double> left_total,
                      std::span<const double> right_total, const MechanismConfig& config,
                      const SweepOptions& options) {
  return SweepWorkspace().hcm(events, left_total, right_total, config, options);
}

SweepResult sweep_mcm(std::span<const IntervalEvent> events, std::size_t num_left,
                      std::size_t num_right, const SweepOptions& options) {
  return SweepWorkspace().mcm(events, num_left, num_right, options);
}

SweepResult SweepWorkspace::cm(std::span<const IntervalEvent> events, const SweepOptions& options) {
  CmState st;
  return run_sweep(events, st, options);
}

SweepResult SweepWorkspace::hcm(std::span<const IntervalEvent> events,
                                std::span<const double> left_total,
                                std::span<const double> right_total, const MechanismConfig& config,
                                const SweepOptions& options) {
  if (wx_.size() < left_total.size()) wx_.resize(left_total.size(), 0.0);
  if (wy_.size() < right_total.size()) wy_.resize(right_total.size(), 0.0);
  HcmState st{left_total, right_total, config.c_x(), config.c_y(), wx_, wy_};
  SweepResult out = run_sweep(events, st, options);
  for (const IntervalEvent& ev : events) {
    wx_[ev.left] = 0.0;
    wy_[ev.right] = 0.0;
  }
  return out;
}

SweepResult SweepWorkspace::mcm(std::span<const IntervalEvent> events, std::size_t num_left,
                                std::size_t num_right, const SweepOptions& options) {
  if (!matching_.clean() || matching_.num_left() != num_left || matching_.num_right() != num_right) {
    matching_.reset(num_left, num_right);
  }
  McmState st{matching_};
  return run_sweep(events, st, options);
}

void DynamicMatching::reset(std::size_t num_left, std::size_t num_right) {
  adj_.assign(num_left, {});
  match_left_.assign(num_left, kNone);
  mate_right_.assign(num_right, 0);
  match_right_.assign(num_right, kNone);
  active_left_.clear();
  visit_stamp_.assign(num_right, 0);
  stamp_ = 0;
  size_ = 0;
}

void DynamicMatching::insert(std::size_t edge, Index left, Index right) {
  if (adj_[left].empty()) active_left_.push_back(left);
  adj_[left].push_back({edge, right});
  if (match_left_[left] == kNone && match_right_[right] == kNone) {
    match_left_[left] = edge;
    match_right_[right] = edge;
    mate_right_[right] = left;
    ++size_;
    return;
  }
  if (augment_once()) ++size_;
}

void DynamicMatching::erase(std::size_t edge, Index left, Index right) {
  auto& a = adj_[left];
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].edge == edge) {
      a.erase(a.begin() + static_cast<std::ptrdiff_t>(k));
      break;
    }
  }
  if (a.empty()) std::erase(active_left_, left);
  if (match_left_[left] == edge) {
    match_left_[left] = kNone;
    match_right_[right] = kNone;
    --size_;
    if (augment_once()) ++size_;
  }
}

std::vector<std::size_t> DynamicMatching::matching() const {
  std::vector<std::size_t> out;
  for (std::size_t e : match_left_) {
    if (e != kNone) out.push_back(e);
  }
  return out;
}

bool DynamicMatching::augment_once() {
  if (++stamp_ == 0) {
    std::fill(visit_stamp_.begin(), visit_stamp_.end(), 0);
    stamp_ = 1;
  }
  // One Kuhn phase with a shared visited set: a failed search from one free
  // vertex cannot succeed through the same right vertices from another.
  for (Index u : active_left_) {
    if (match_left_[u] == kNone && try_kuhn(u)) return true;
  }
  return false;
}

bool DynamicMatching::try_kuhn(Index u) {
  for (const Adj& a : adj_[u]) {
    if (visit_stamp_[a.right] == stamp_) continue;
    visit_stamp_[a.right] = stamp_;
    if (match_right_[a.right] == kNone || try_kuhn(mate_right_[a.right])) {
      match_left_[u] = a.edge;
      match_right_[a.right] = a.edge;
      mate_right_[a.right] = u;
      return true;
    }
  }
  return false;
}

}  // namespace m2m
