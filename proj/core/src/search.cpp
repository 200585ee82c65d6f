#include "m2m/search.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "m2m/error.hpp"

namespace m2m {

SearchGrid discretize(int n) {
  if (n < 1) throw InputError("grid divisor N must be at least 1");
  SearchGrid g;
  g.n = n;
  const double pitch = kPi / n;
  for (int ta = 0; ta < n; ++ta) {
    for (int tb = 0; tb < n; ++tb) {
      const std::size_t start = g.centers.size();
      for (int a = 2 * ta; a < 2 * ta + 2; ++a) {
        for (int b = 2 * tb; b < 2 * tb + 2; ++b) {
          const Vec2 c(-kPi + (a + 0.5) * pitch, -kPi + (b + 0.5) * pitch);
          if (c.norm() <= kPi) g.centers.push_back(c);
        }
      }
      if (g.centers.size() > start) g.tile_start.push_back(start);
    }
  }
  if (g.centers.empty()) {
    g.centers.push_back(Vec2::Zero());
    g.tile_start.push_back(0);
  }
  g.tile_start.push_back(g.centers.size());
  return g;
}

std::size_t nearest_center(const SearchGrid& grid, const Vec2& v) {
  if (grid.centers.empty()) throw InputError("empty grid");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.centers.size(); ++k) {
    const double d = (grid.centers[k] - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kBins = 128;  // power of two
static_assert((kBins & (kBins - 1)) == 0);
using Bins = std::array<double, kBins + 1>;

struct PolarEntry {
  double theta;
  double azimuth;
  double sin_theta;
  double inv_sin;  // 1 / sin(theta), infinite at the poles
};

// Same arithmetic as omega() with the sines precomputed.
double omega_cached(double eps, double sin_eps, const PolarEntry& a, const PolarEntry& b) {
  if (a.theta < b.theta) {
    if (a.sin_theta <= 0.0 || b.sin_theta <= 0.0) return kPi;
    const double x = sin_eps / a.sin_theta;
    const double y = sin_eps / b.sin_theta;
    if (x > 1.0 || y > 1.0) return kPi;
    return std::min(kPi, std::asin(x) + std::asin(y));
  }
  const double d = a.theta - b.theta;
  if (d > 2.0 * eps) return kPi;
  const double den = a.sin_theta * b.sin_theta;
  if (den <= 0.0) return kPi;
  const double half = std::sin(eps + 0.5 * d) * std::sin(eps - 0.5 * d) / den;
  if (half > 1.0) return kPi;
  return 2.0 * std::asin(std::sqrt(std::max(half, 0.0)));
}

PolarEntry entry(const Polar& p) {
  const double s = std::sin(p.theta);
  return {p.theta, p.azimuth, s, s > 0.0 ? 1.0 / s : std::numeric_limits<double>::infinity()};
}

struct TileEntry {
  double theta_max;
  double inv_sin_max;
  double az_center;
  double az_half;  // covering arc half width
};

// Smallest arc covering a few azimuths: the complement of the largest gap.
std::pair<double, double> covering_arc(std::vector<double>& az) {
  std::sort(az.begin(), az.end());
  double gap = kTwoPi - (az.back() - az.front());
  double start = az.front();
  for (std::size_t k = 1; k < az.size(); ++k) {
    if (az[k] - az[k - 1] > gap) {
      gap = az[k] - az[k - 1];
      start = az[k];
    }
  }
  const double half = 0.5 * (kTwoPi - gap);
  return {start + half, half};
}

struct Tables {
  std::size_t centers = 0;
  std::size_t nl = 0;
  std::size_t nr = 0;
  std::vector<PolarEntry> left;   // [center][i]
  std::vector<PolarEntry> right;  // [center][j]
  // Per 2x2 tile of v2 centers and right feature: bounds over the tile.
  std::vector<TileEntry> right_tiles;  // [tile][j]
  std::vector<std::size_t> tile_of;    // center -> tile
};

Tables build_tables(const AssociationGraph& graph, const SearchGrid& grid) {
  Tables t;
  t.centers = grid.centers.size();
  t.nl = graph.num_left();
  t.nr = graph.num_right();
  t.left.resize(t.centers * t.nl);
  t.right.resize(t.centers * t.nr);
  for (std::size_t c = 0; c < t.centers; ++c) {
    const Mat3 r = exp_so3(planar(grid.centers[c]));
    for (std::size_t i = 0; i < t.nl; ++i) {
      const Polar p = polar(r * graph.left()[i]);
      t.left[c * t.nl + i] = entry(p);
    }
    for (std::size_t j = 0; j < t.nr; ++j) {
      const Polar p = polar(r * graph.right()[j]);
      t.right[c * t.nr + j] = entry(p);
    }
  }
  const std::size_t tiles = grid.tile_start.size() - 1;
  t.tile_of.resize(t.centers);
  t.right_tiles.resize(tiles * t.nr);
  std::vector<double> az;
  for (std::size_t k = 0; k < tiles; ++k) {
    for (std::size_t c = grid.tile_start[k]; c < grid.tile_start[k + 1]; ++c) t.tile_of[c] = k;
    for (std::size_t j = 0; j < t.nr; ++j) {
      TileEntry te{0.0, 0.0, 0.0, 0.0};
      az.clear();
      for (std::size_t c = grid.tile_start[k]; c < grid.tile_start[k + 1]; ++c) {
        const PolarEntry& p = t.right[c * t.nr + j];
        te.theta_max = std::max(te.theta_max, p.theta);
        te.inv_sin_max = std::max(te.inv_sin_max, p.inv_sin);
        az.push_back(p.azimuth);
      }
      std::tie(te.az_center, te.az_half) = covering_arc(az);
      t.right_tiles[k * t.nr + j] = te;
    }
  }
  return t;
}

struct Shared {
  const AssociationGraph& graph;
  const ProbabilityAssignment* assignment;
  const SearchOptions& options;
  const SearchGrid& grid;
  const Tables& tables;
  std::vector<double> upper;  // per-edge score upper bound
  std::vector<double> probs;
  std::atomic<double> threshold{-std::numeric_limits<double>::infinity()};

  void raise(double s) {
    double cur = threshold.load(std::memory_order_relaxed);
    while (s > cur && !threshold.compare_exchange_weak(cur, s, std::memory_order_relaxed)) {
    }
  }
};

struct Partial {
  bool have = false;
  Hypothesis best;
  std::vector<Hypothesis> ties;
  bool overflow = false;
  std::size_t evaluated = 0;
  std::size_t pruned = 0;
};

// Folds hypotheses (candidate best `b` and its ties) into `acc`. Callers feed
// results in enumeration order so strict comparisons keep the earliest.
void fold(Partial& acc, const Hypothesis& b, const std::vector<Hypothesis>& ties, bool overflow,
          const SearchOptions& opt) {
  const double tol_rel = opt.tie_rel_tol;
  if (!acc.have || b.score > acc.best.score) {
    const bool clear = !acc.have || b.score > acc.best.score + tie_tolerance(acc.best.score, tol_rel);
    acc.have = true;
    acc.best = b;
    if (clear) {
      acc.ties.clear();
      acc.overflow = false;
    } else {
      const double floor = b.score - tie_tolerance(b.score, tol_rel);
      std::erase_if(acc.ties, [&](const Hypothesis& h) { return h.score < floor; });
    }
  }
  const double floor = acc.best.score - tie_tolerance(acc.best.score, tol_rel);
  if (b.score < floor) return;
  for (const Hypothesis& h : ties) {
    if (h.score < floor) continue;
    if (acc.ties.size() < opt.max_ties) {
      acc.ties.push_back(h);
    } else {
      acc.overflow = true;
    }
  }
  acc.overflow = acc.overflow || overflow;
}

class CellEvaluator {
 public:
  explicit CellEvaluator(Shared& s) : s_(s) {
    const std::size_t m = s.graph.num_edges();
    t1_.resize(m);
    t2_.resize(m);
    right_of_.resize(m);
    for (std::size_t e = 0; e < m; ++e) right_of_[e] = s.graph.edge(e).j;
    sin_eps_ = std::sin(s.options.config.epsilon);
  }

  void run(std::size_t begin, std::size_t end, Partial& out) {
    const std::size_t nc = s_.tables.centers;
    std::size_t loaded = std::numeric_limits<std::size_t>::max();
    std::size_t cell = begin;
    while (cell < end) {
      const std::size_t c1 = cell / nc;
      const std::size_t c2 = cell % nc;
      if (c1 != loaded) {
        load_left(c1);
        loaded = c1;
      }
      const std::size_t tile = s_.tables.tile_of[c2];
      const std::size_t tile_end = std::min(end, c1 * nc + s_.grid.tile_start[tile + 1]);
      if (s_.options.prune && tile_bound(tile) < cut()) {
        out.pruned += tile_end - cell;
        cell = tile_end;
        continue;
      }
      for (; cell < tile_end; ++cell) evaluate(cell, cell % nc, out);
    }
  }

 private:
  void load_left(std::size_t c1) {
    const auto& g = s_.graph;
    const PolarEntry* row = s_.tables.left.data() + c1 * s_.tables.nl;
    for (std::size_t e = 0; e < g.num_edges(); ++e) t1_[e] = row[g.edge(e).i];
  }

  double cut() const {
    const double thr = s_.threshold.load(std::memory_order_relaxed);
    return thr - tie_tolerance(thr, s_.options.tie_rel_tol);
  }

  // Adds weight v to the bins of arc center c +/- w (c in (-2 pi, 2 pi),
  // w < pi); bins wrap modulo kBins.
  static void add_arc(Bins& diff, double c, double w, double v) {
    constexpr double bin_scale = kBins / kTwoPi;
    c += 2.0 * kTwoPi;
    const auto blo = static_cast<std::size_t>((c - w) * bin_scale);
    const auto bhi = static_cast<std::size_t>((c + w) * bin_scale);
    const std::size_t lo = blo & (kBins - 1);
    const std::size_t hi = lo + (bhi - blo);
    diff[lo] += v;
    if (hi < kBins) {
      diff[hi + 1] -= v;
    } else {
      diff[kBins] -= v;
      diff[0] += v;
      diff[hi - kBins + 1] -= v;
    }
  }

  static double peak(const Bins& diff) {
    double run = 0.0;
    double top = 0.0;
    for (std::size_t b = 0; b < kBins; ++b) {
      run += diff[b];
      top = std::max(top, run);
    }
    return top;
  }

  // Bound over every cell pairing the loaded v1 center with a v2 tile.
  double tile_bound(std::size_t tile) const {
    const TileEntry* row = s_.tables.right_tiles.data() + tile * s_.tables.nr;
    const double two_eps = 2.0 * s_.options.config.epsilon;
    const double wk = 0.5 * kPi * sin_eps_;
    const double* up = s_.upper.data();
    Bins diff{};
    double full = 0.0;
    for (std::size_t e = 0; e < right_of_.size(); ++e) {
      const PolarEntry& l = t1_[e];
      const TileEntry& r = row[right_of_[e]];
      if (l.theta - r.theta_max > two_eps) continue;
      const double w = wk * (l.inv_sin + r.inv_sin_max) + r.az_half;
      if (w >= kPi) {
        full += up[e];
      } else {
        add_arc(diff, r.az_center - l.azimuth, w, up[e]);
      }
    }
    return peak(diff) + full;
  }

  void evaluate(std::size_t cell, std::size_t c2, Partial& out) {
    const auto& g = s_.graph;
    const auto& opt = s_.options;
    const double eps = opt.config.epsilon;
    const PolarEntry* row = s_.tables.right.data() + c2 * s_.tables.nr;
    const double thr = s_.threshold.load(std::memory_order_relaxed);
    const double cut = thr - tie_tolerance(thr, opt.tie_rel_tol);

    // Gate plus a coarse phi histogram: asin(x) <= x pi / 2 and the
    // AM-GM inequality give omega <= (pi / 2) sin(eps) (1 / s1 + 1 / s2) on
    // both branches, so each arc lies inside a cheap superset.
    Bins diff{};
    const double wk = 0.5 * kPi * sin_eps_;
    const double two_eps = 2.0 * eps;
    const double* up = s_.upper.data();
    double full = 0.0;
    passing_.clear();
    for (std::size_t e = 0; e < right_of_.size(); ++e) {
      const PolarEntry& l = t1_[e];
      const PolarEntry& r = row[right_of_[e]];
      if (l.theta - r.theta > two_eps) continue;
      passing_.push_back(e);
      t2_[e] = r;
      if (!opt.prune) continue;
      const double w = wk * (l.inv_sin + r.inv_sin);
      if (w >= kPi) {
        full += up[e];
        continue;
      }
      add_arc(diff, r.azimuth - l.azimuth, w, up[e]);
    }
    if (opt.prune && peak(diff) + full < cut) {
      ++out.pruned;
      return;
    }

    // Exact arcs, a tighter histogram, then events.
    diff.fill(0.0);
    double full_exact = 0.0;
    events_.clear();
    for (std::size_t e : passing_) {
      const double w = omega_cached(eps, sin_eps_, t1_[e], t2_[e]);
      const ArcSet arcs = arcs_around(wrap_two_pi(t2_[e].azimuth - t1_[e].azimuth), w);
      if (w >= kPi) {
        full_exact += s_.upper[e];
      } else {
        add_arc(diff, t2_[e].azimuth - t1_[e].azimuth, w, s_.upper[e]);
      }
      append_arc_events(events_, arcs, e, g.edge(e), s_.probs[e]);
    }
    if (opt.prune && peak(diff) + full_exact < cut) {
      ++out.pruned;
      return;
    }
    sort_events(events_);

    SweepOptions so;
    so.tie_rel_tol = opt.tie_rel_tol;
    so.max_ties = opt.max_ties;
    so.collect_ties = true;
    SweepResult r;
    switch (opt.mechanism) {
      case Mechanism::kCm:
        r = ws_.cm(events_, so);
        break;
      case Mechanism::kMcm:
      case Mechanism::kMcmThenHcm:
        r = ws_.mcm(events_, g.num_left(), g.num_right(), so);
        break;
      case Mechanism::kHcm:
        r = ws_.hcm(events_, s_.assignment->left_total, s_.assignment->right_total, opt.config, so);
        break;
    }
    ++out.evaluated;

    const Vec2& v1 = s_.grid.centers[cell / s_.tables.centers];
    const Vec2& v2 = s_.grid.centers[c2];
    Hypothesis best{cell, r.event == std::numeric_limits<std::size_t>::max() ? 0 : r.event,
                    PoseParams{r.phi_mid, v1, v2}, r.score};
    cell_ties_.clear();
    if (r.ties.empty()) {
      cell_ties_.push_back(best);
    } else {
      for (const SweepPoint& p : r.ties) {
        cell_ties_.push_back({cell, p.event, PoseParams{p.phi_mid, v1, v2}, p.score});
      }
    }
    fold(out, best, cell_ties_, r.tie_overflow, opt);
    s_.raise(r.score);
  }

  Shared& s_;
  std::vector<PolarEntry> t1_;
  std::vector<PolarEntry> t2_;
  std::vector<Index> right_of_;
  std::vector<std::size_t> passing_;
  std::vector<IntervalEvent> events_;
  std::vector<Hypothesis> cell_ties_;
  SweepWorkspace ws_;
  double sin_eps_ = 0.0;
};

bool needs_assignment(Mechanism m) { return m == Mechanism::kHcm || m == Mechanism::kMcmThenHcm; }

void check_inputs(const AssociationGraph& graph, const ProbabilityAssignment* assignment,
                  const SearchOptions& options) {
  options.config.validate();
  if (!graph.has_bearings()) throw InputError("graph has no bearings");
  if (needs_assignment(options.mechanism)) {
    if (assignment == nullptr) throw InputError("HCM search needs a probability assignment");
    if (assignment->edge_prob.size() != graph.num_edges() ||
        assignment->left_total.size() != graph.num_left() ||
        assignment->right_total.size() != graph.num_right()) {
      throw InputError("probability assignment does not match the graph");
    }
  }
}

}  // namespace

SweepResult evaluate_cell(const AssociationGraph& graph, const ProbabilityAssignment* assignment,
                          const SearchOptions& options, const Vec2& v1, const Vec2& v2) {
  check_inputs(graph, assignment, options);
  const bool hcm = options.mechanism == Mechanism::kHcm;
  std::vector<double> probs;
  if (assignment != nullptr) probs = assignment->edge_prob;
  const auto events = build_events(graph, v1, v2, options.config.epsilon, probs);
  SweepOptions so;
  so.tie_rel_tol = options.tie_rel_tol;
  so.max_ties = options.max_ties;
  if (options.mechanism == Mechanism::kCm) return sweep_cm(events, so);
  if (!hcm) return sweep_mcm(events, graph.num_left(), graph.num_right(), so);
  return sweep_hcm(events, assignment->left_total, assignment->right_total, options.config, so);
}

SearchResult search(const AssociationGraph& graph, const ProbabilityAssignment* assignment,
                    const SearchOptions& options, const SearchGrid& grid) {
  check_inputs(graph, assignment, options);
  if (grid.centers.empty()) throw InputError("search grid is empty");
  const auto t0 = Clock::now();

  const Tables tables = build_tables(graph, grid);
  Shared shared{graph, assignment, options, grid, tables, {}, {}};
  shared.upper.assign(graph.num_edges(), 1.0);
  shared.probs.assign(graph.num_edges(), 0.0);
  if (assignment != nullptr) shared.probs = assignment->edge_prob;
  if (options.mechanism == Mechanism::kHcm) {
    // log(1 + C sum w) <= sum log(1 + C w), so per-edge terms bound the score.
    const double cx = options.config.c_x();
    const double cy = options.config.c_y();
    for (std::size_t e = 0; e < graph.num_edges(); ++e) {
      const Edge& ed = graph.edge(e);
      const double p = assignment->edge_prob[e];
      shared.upper[e] = p <= 0.0 ? 0.0
                                 : std::log1p(cx * p / assignment->left_total[ed.i]) +
                                       std::log1p(cy * p / assignment->right_total[ed.j]);
    }
  }

  const std::size_t cells = grid.num_cells();
  std::size_t workers = options.threads > 0 ? static_cast<std::size_t>(options.threads)
                                            : std::max(1u, std::thread::hardware_concurrency());
  workers = std::max<std::size_t>(1, std::min(workers, cells));
  std::vector<Partial> parts(workers);
  const auto range = [&](std::size_t w) {
    return std::pair{cells * w / workers, cells * (w + 1) / workers};
  };
  if (workers == 1) {
    CellEvaluator ev(shared);
    ev.run(0, cells, parts[0]);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        CellEvaluator ev(shared);
        const auto [b, e] = range(w);
        ev.run(b, e, parts[w]);
      });
    }
    for (auto& t : pool) t.join();
  }

  Partial total;
  for (const Partial& p : parts) {
    total.evaluated += p.evaluated;
    total.pruned += p.pruned;
    if (p.have) fold(total, p.best, p.ties, p.overflow, options);
  }
  const double floor = total.best.score - tie_tolerance(total.best.score, options.tie_rel_tol);
  std::erase_if(total.ties, [&](const Hypothesis& h) { return h.score < floor; });

  SearchResult out;
  out.mechanism = options.mechanism;
  out.score = total.best.score;
  out.best = total.best;
  out.ties = std::move(total.ties);
  out.tie_overflow = total.overflow;

  if (options.mechanism == Mechanism::kMcmThenHcm) {
    const Disambiguation d = mcm_then_hcm(graph, out.ties, *assignment, options.config,
                                          options.tie_rel_tol);
    out.best = out.ties[d.index];
    out.hcm_score = d.hcm_score;
  }
  out.pose = params_to_pose(out.best.params);
  out.rescored = score_hypothesis(graph, out.pose, options.config, options.mechanism, assignment);
  out.stats.cells = cells;
  out.stats.evaluated = total.evaluated;
  out.stats.pruned = total.pruned;
  out.stats.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

Disambiguation mcm_then_hcm(const AssociationGraph& graph, const std::vector<Hypothesis>& ties,
                            const ProbabilityAssignment& assignment, const MechanismConfig& config,
                            double tie_rel_tol) {
  if (ties.empty()) throw InputError("empty tie set");
  std::vector<double> scores(ties.size());
  HcmEvaluator hcm;
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < ties.size(); ++k) {
    const InlierGraph in = identify_inliers(graph, params_to_pose(ties[k].params), config);
    scores[k] = hcm.run(graph, in.edges, assignment, config);
    top = std::max(top, scores[k]);
  }
  const double floor = top - tie_tolerance(top, tie_rel_tol);
  for (std::size_t k = 0; k < ties.size(); ++k) {
    if (scores[k] >= floor) return {k, scores[k]};
  }
  return {0, scores[0]};
}

}  // namespace m2m
