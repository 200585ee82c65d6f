#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "m2m/association.hpp"
#include "m2m/geometry.hpp"
#include "m2m/marginal.hpp"
#include "m2m/mechanisms.hpp"
#include "m2m/sweep.hpp"

namespace m2m {

/// Square lattice of pitch pi/N over [-pi, pi]^2, restricted to the disk of
/// radius pi. The same centers serve both v1 and v2; cell index
/// i1 * centers.size() + i2 pairs center i1 (v1) with center i2 (v2).
/// Centers are grouped into 2x2 lattice tiles; tile k holds centers
/// [tile_start[k], tile_start[k + 1]).
struct SearchGrid {
  int n = 0;
  std::vector<Vec2> centers;
  std::vector<std::size_t> tile_start;

  std::size_t num_cells() const { return centers.size() * centers.size(); }
  const Vec2& v1(std::size_t cell) const { return centers[cell / centers.size()]; }
  const Vec2& v2(std::size_t cell) const { return centers[cell % centers.size()]; }
};

/// Centers at -pi + (k + 1/2) pi / N, k = 0..2N-1, per axis, ordered by tile
/// (x-major) then within the tile (x-major). When no center falls inside the
/// disk the origin is used instead.
SearchGrid discretize(int n);

/// Index of the kept center closest to v.
std::size_t nearest_center(const SearchGrid& grid, const Vec2& v);
inline Vec2 snap_to_grid(const SearchGrid& grid, const Vec2& v) {
  return grid.centers[nearest_center(grid, v)];
}

struct SearchOptions {
  Mechanism mechanism = Mechanism::kHcm;
  MechanismConfig config;
  int threads = 1;  // <= 0: hardware concurrency
  double tie_rel_tol = 1e-9;
  std::size_t max_ties = 4096;
  /// Skip cells whose score upper bound is below the best found so far.
  /// Exact: the result and tie set do not depend on this flag.
  bool prune = true;
};

struct Hypothesis {
  std::size_t cell = 0;
  std::size_t event = 0;  // index of the sweep endpoint within the cell
  PoseParams params;
  double score = 0.0;
};

struct SearchStats {
  std::size_t cells = 0;
  std::size_t evaluated = 0;
  std::size_t pruned = 0;
  double seconds = 0.0;
};

struct SearchResult {
  Mechanism mechanism = Mechanism::kHcm;
  double score = 0.0;  // MCM score for kMcmThenHcm
  Hypothesis best;
  RelativePose pose;
  std::vector<Hypothesis> ties;  // enumeration order; includes `best`
  bool tie_overflow = false;
  /// Standalone re-scoring of `pose`; HCM for kMcmThenHcm.
  HypothesisScore rescored;
  std::optional<double> hcm_score;  // set for kMcmThenHcm
  SearchStats stats;
};

/// Exhaustive search over grid cells with a per-cell phi sweep.
/// `assignment` is required for kHcm and kMcmThenHcm.
SearchResult search(const AssociationGraph& graph, const ProbabilityAssignment* assignment,
                    const SearchOptions& options, const SearchGrid& grid);

/// Sweep of a single (v1, v2) cell under the options' mechanism.
SweepResult evaluate_cell(const AssociationGraph& graph, const ProbabilityAssignment* assignment,
                          const SearchOptions& options, const Vec2& v1, const Vec2& v2);

struct Disambiguation {
  std::size_t index = 0;  // into the tie set
  double hcm_score = 0.0;
};

/// Picks the tied hypothesis with the largest HCM score; within 1e-9 the
/// earliest in enumeration order wins. Throws InputError on an empty set.
Disambiguation mcm_then_hcm(const AssociationGraph& graph, const std::vector<Hypothesis>& ties,
                            const ProbabilityAssignment& assignment, const MechanismConfig& config,
                            double tie_rel_tol = 1e-9);

}  // namespace m2m
