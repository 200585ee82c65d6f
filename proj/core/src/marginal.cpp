#include "m2m/marginal.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "m2m/error.hpp"

namespace m2m {

namespace {

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

struct ComponentSolve {
  std::vector<double> prob;  // aligned with Component::edges
  int iterations = 0;
  double violation = 0.0;
  bool converged = false;
};

// Block coordinate ascent on the dual of the component QP. With multipliers
// lambda (rows) and mu (columns), p_e = clip(p_ref - lambda_i - mu_j, 0, 1);
// each block update is an exact capped-simplex projection.
ComponentSolve solve_component(const AssociationGraph& graph, const Component& comp, double p_ref,
                               const AssignmentConfig& cfg) {
  const std::size_t m = comp.edges.size();
  std::vector<std::size_t> row_of(m);
  std::vector<std::size_t> col_of(m);
  std::vector<std::vector<std::size_t>> rows(comp.left.size());
  std::vector<std::vector<std::size_t>> cols(comp.right.size());
  for (std::size_t k = 0; k < m; ++k) {
    const Edge& e = graph.edge(comp.edges[k]);
    row_of[k] = static_cast<std::size_t>(
        std::lower_bound(comp.left.begin(), comp.left.end(), e.i) - comp.left.begin());
    col_of[k] = static_cast<std::size_t>(
        std::lower_bound(comp.right.begin(), comp.right.end(), e.j) - comp.right.begin());
    rows[row_of[k]].push_back(k);
    cols[col_of[k]].push_back(k);
  }

  std::vector<double> lambda(rows.size(), 0.0);
  std::vector<double> mu(cols.size(), 0.0);
  std::vector<double> z;

  ComponentSolve out;
  out.prob.assign(m, clip01(p_ref));
  std::vector<double> prev = out.prob;

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      z.clear();
      for (std::size_t k : rows[r]) z.push_back(p_ref - mu[col_of[k]]);
      lambda[r] = capped_simplex_shift(z, cfg.p_x);
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      z.clear();
      for (std::size_t k : cols[c]) z.push_back(p_ref - lambda[row_of[k]]);
      mu[c] = capped_simplex_shift(z, cfg.p_y);
    }

    double change = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      out.prob[k] = clip01(p_ref - lambda[row_of[k]] - mu[col_of[k]]);
      change = std::max(change, std::abs(out.prob[k] - prev[k]));
    }
    // Columns are exact after the column pass; only rows can be violated.
    double violation = 0.0;
    for (const auto& row : rows) {
      double s = 0.0;
      for (std::size_t k : row) s += out.prob[k];
      violation = std::max(violation, s - cfg.p_x);
    }
    out.iterations = it;
    out.violation = std::max(violation, 0.0);
    if (out.violation <= cfg.tolerance && change <= cfg.tolerance) {
      out.converged = true;
      break;
    }
    prev = out.prob;
  }
  return out;
}

}  // namespace

void AssignmentConfig::validate() const {
  if (!(p_x > 0.0 && p_x <= 1.0) || !(p_y > 0.0 && p_y <= 1.0)) {
    throw InputError("p_x and p_y must lie in (0, 1]");
  }
  if (!(tolerance > 0.0)) throw InputError("assignment tolerance must be positive");
  if (max_iterations < 1) throw InputError("max_iterations must be positive");
}

double ProbabilityAssignment::objective() const {
  double f = 0.0;
  for (double p : edge_prob) f += (p - reference) * (p - reference);
  return f;
}

double reference_probability(std::size_t num_left, std::size_t num_right, std::size_t num_edges,
                             double p_x, double p_y) {
  if (num_edges == 0) throw EmptyGraphError("cannot assign probabilities without edges");
  return (p_x * static_cast<double>(num_left) + p_y * static_cast<double>(num_right)) /
         static_cast<double>(num_edges) / 2.0;
}

double capped_simplex_shift(const std::vector<double>& z, double cap) {
  double total = 0.0;
  for (double v : z) total += clip01(v);
  if (total <= cap) return 0.0;

  // g(tau) = sum clip(z - tau, 0, 1) is piecewise linear and nonincreasing
  // with breakpoints at z - 1 and z; walk the breakpoints above zero.
  std::vector<double> bp;
  bp.reserve(2 * z.size() + 1);
  bp.push_back(0.0);
  for (double v : z) {
    if (v - 1.0 > 0.0) bp.push_back(v - 1.0);
    if (v > 0.0) bp.push_back(v);
  }
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());

  const auto g = [&](double tau) {
    double s = 0.0;
    for (double v : z) s += clip01(v - tau);
    return s;
  };
  double lo = bp.front();
  double g_lo = g(lo);
  for (std::size_t k = 1; k < bp.size(); ++k) {
    const double hi = bp[k];
    const double g_hi = g(hi);
    if (g_hi <= cap) {
      // linear on [lo, hi]
      if (g_lo == g_hi) return hi;
      return lo + (g_lo - cap) * (hi - lo) / (g_lo - g_hi);
    }
    lo = hi;
    g_lo = g_hi;
  }
  return lo;
}

ProbabilityAssignment assign_marginals(const AssociationGraph& graph, const AssignmentConfig& config,
                                       int threads) {
  config.validate();
  ProbabilityAssignment out;
  out.reference = reference_probability(graph.num_left(), graph.num_right(), graph.num_edges(),
                                        config.p_x, config.p_y);
  const std::vector<Component> comps = connected_components(graph);
  std::vector<ComponentSolve> solved(comps.size());

  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)),
                                                     comps.size()));
  if (workers == 1) {
    for (std::size_t c = 0; c < comps.size(); ++c) {
      solved[c] = solve_component(graph, comps[c], out.reference, config);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < comps.size(); c = next++) {
          solved[c] = solve_component(graph, comps[c], out.reference, config);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  out.edge_prob.assign(graph.num_edges(), 0.0);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const ComponentSolve& s = solved[c];
    out.iterations = std::max(out.iterations, s.iterations);
    out.violation = std::max(out.violation, s.violation);
    if (!s.converged) {
      std::ostringstream os;
      os << "marginal assignment did not converge in " << config.max_iterations
         << " iterations (component " << c << ", violation " << s.violation << ")";
      throw ConvergenceError(os.str(), s.violation);
    }
    for (std::size_t k = 0; k < comps[c].edges.size(); ++k) {
      out.edge_prob[comps[c].edges[k]] = s.prob[k];
    }
  }

  out.left_total.assign(graph.num_left(), 0.0);
  out.right_total.assign(graph.num_right(), 0.0);
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    out.left_total[graph.edge(e).i] += out.edge_prob[e];
    out.right_total[graph.edge(e).j] += out.edge_prob[e];
  }
  return out;
}

}  // namespace m2m
