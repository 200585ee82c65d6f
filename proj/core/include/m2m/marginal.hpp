#pragma once

#include <cstddef>
#include <vector>

#include "m2m/association.hpp"

namespace m2m {

struct AssignmentConfig {
  double p_x = 0.1;
  double p_y = 0.1;
  double tolerance = 1e-8;
  int max_iterations = 10000;

  void validate() const;
};

/// Marginal probability per edge plus the totals actually assigned to each
/// vertex (these can fall short of p_x / p_y when constraints are slack).
struct ProbabilityAssignment {
  std::vector<double> edge_prob;
  std::vector<double> left_total;
  std::vector<double> right_total;
  double reference = 0.0;
  int iterations = 0;       // largest per-component iteration count
  double violation = 0.0;   // largest row/column excess over its cap

  double objective() const;
};

/// (p_x |S| + p_y |T|) / |E| / 2. Throws EmptyGraphError when |E| = 0.
double reference_probability(std::size_t num_left, std::size_t num_right, std::size_t num_edges,
                             double p_x, double p_y);

/// Minimises sum (p - p_ref)^2 over the box [0, 1] subject to row sums <= p_x
/// and column sums <= p_y, one connected component at a time. Throws
/// ConvergenceError if a component does not settle within max_iterations.
ProbabilityAssignment assign_marginals(const AssociationGraph& graph, const AssignmentConfig& config,
                                       int threads = 1);

/// Projection of z onto {x : 0 <= x <= 1, sum x <= cap}; returns the shift
/// tau >= 0 such that x = clip(z - tau, 0, 1).
double capped_simplex_shift(const std::vector<double>& z, double cap);

}  // namespace m2m
