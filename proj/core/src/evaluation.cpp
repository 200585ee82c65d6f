#include "m2m/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>
#include <utility>

#include "m2m/error.hpp"
#include "m2m/matching.hpp"

namespace m2m {

Vec3 random_unit_vector(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    const Vec3 v(g(rng), g(rng), g(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

Mat3 random_rotation(Rng& rng, double max_angle) {
  const Vec3 axis = random_unit_vector(rng);
  std::uniform_real_distribution<double> amp(0.0, max_angle);
  return exp_so3(axis * amp(rng));
}

void SceneConfig::validate() const {
  if (num_points == 0) throw InputError("scene needs at least one point");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw InputError("outlier fraction must lie in [0, 1)");
  }
  if (!(noise_deg >= 0.0)) throw InputError("noise must be non-negative");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw InputError("field of view must lie in (0, 180)");
  if (!(min_depth > 0.0 && max_depth > min_depth)) throw InputError("invalid depth range");
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 180.0)) {
    throw InputError("max rotation must lie in [0, 180]");
  }
}

namespace {

Vec3 random_in_cone(Rng& rng, double half_angle) {
  // Uniform over the spherical cap around +z.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double z = 1.0 - u(rng) * (1.0 - std::cos(half_angle));
  const double a = kTwoPi * u(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return Vec3(r * std::cos(a), r * std::sin(a), z);
}

Vec3 perturb(const Vec3& b, double sigma, Rng& rng) {
  if (sigma <= 0.0) return b;
  std::normal_distribution<double> g(0.0, sigma);
  Vec3 d(g(rng), g(rng), g(rng));
  d -= d.dot(b) * b;
  return (b + d).normalized();
}

bool in_view(const Vec3& p, double half_angle) {
  return p.z() > 0.0 && vector_angle(p, Vec3::UnitZ()) <= half_angle;
}

}  // namespace

SyntheticScene generate_scene(const SceneConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const double half = deg2rad(config.fov_deg) / 2.0;
  const double sigma = deg2rad(config.noise_deg);
  std::uniform_real_distribution<double> depth(config.min_depth, config.max_depth);
  std::uniform_real_distribution<double> sim_true(0.85, 1.0);
  std::uniform_real_distribution<double> sim_false(0.7, 0.9);

  SyntheticScene s;
  s.seed = config.seed;
  const std::size_t n = config.num_points;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw InputError("could not place points visible in both cameras");
    s.pose.R = random_rotation(rng, deg2rad(config.max_rotation_deg));
    s.pose.t = random_unit_vector(rng);
    s.points.clear();
    for (std::size_t tries = 0; s.points.size() < n && tries < 200 * n; ++tries) {
      const Vec3 x = random_in_cone(rng, half) * depth(rng);
      const Vec3 p = s.pose.R.transpose() * (x - s.pose.t);
      if (in_view(p, half)) s.points.push_back(x);
    }
    if (s.points.size() == n) break;
  }

  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(n * config.outlier_fraction / (1.0 - config.outlier_fraction)));
  const std::size_t total = n + n_out;

  // Features are stored in shuffled order so that truth is not the identity.
  std::vector<Index> lperm(total);
  std::vector<Index> rperm(total);
  std::iota(lperm.begin(), lperm.end(), Index{0});
  std::iota(rperm.begin(), rperm.end(), Index{0});
  std::shuffle(lperm.begin(), lperm.end(), rng);
  std::shuffle(rperm.begin(), rperm.end(), rng);

  std::vector<Bearing> left(total);
  std::vector<Bearing> right(total);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3& x = s.points[k];
    const Vec3 p = s.pose.R.transpose() * (x - s.pose.t);
    left[lperm[k]] = perturb(x.normalized(), sigma, rng);
    right[rperm[k]] = perturb(p.normalized(), sigma, rng);
  }
  for (std::size_t k = n; k < total; ++k) {
    left[lperm[k]] = random_in_cone(rng, half);
    right[rperm[k]] = random_in_cone(rng, half);
  }

  const std::size_t cap = std::max<std::size_t>(1, config.ambiguity);
  std::vector<std::size_t> ldeg(total, 0);
  std::vector<std::size_t> rdeg(total, 0);
  std::set<std::pair<Index, Index>> seen;
  std::vector<Edge> edges;
  const auto add = [&](Index i, Index j, double sim) {
    if (ldeg[i] >= cap || rdeg[j] >= cap || !seen.insert({i, j}).second) return;
    ++ldeg[i];
    ++rdeg[j];
    edges.push_back({i, j, sim, 0.0});
  };

  for (std::size_t k = 0; k < n; ++k) {
    add(lperm[k], rperm[k], sim_true(rng));
    s.truth.matches.emplace_back(lperm[k], rperm[k]);
  }
  s.truth.pose = s.pose;
  std::sort(s.truth.matches.begin(), s.truth.matches.end());

  if (cap > 1) {
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = (s.points[a] - s.points[k]).squaredNorm();
        const double db = (s.points[b] - s.points[k]).squaredNorm();
        return da != db ? da < db : a < b;
      });
      for (std::size_t m = 1; m < n && m < cap; ++m) add(lperm[k], rperm[order[m]], sim_false(rng));
    }
  }
  if (n_out > 0) {
    std::uniform_int_distribution<std::size_t> any(0, total - 1);
    for (std::size_t k = n; k < total; ++k) {
      for (std::size_t c = 0; c < cap; ++c) add(lperm[k], static_cast<Index>(any(rng)), sim_false(rng));
      for (std::size_t c = 0; c < cap; ++c) add(static_cast<Index>(any(rng)), rperm[k], sim_false(rng));
    }
  }
  s.graph = AssociationGraph(std::move(left), std::move(right), std::move(edges));
  return s;
}

PoseError pose_error(const RelativePose& estimate, const RelativePose& truth) {
  PoseError e;
  e.rotation = rotation_distance(estimate.R, truth.R);
  e.translation = vector_angle(estimate.t, truth.t);
  e.combined = std::max(e.rotation, e.translation);
  return e;
}

PoseError pose_error(std::span<const RelativePose> estimates, const RelativePose& truth) {
  if (estimates.empty()) throw InputError("no estimates");
  PoseError worst = pose_error(estimates.front(), truth);
  for (const RelativePose& p : estimates.subspan(1)) {
    const PoseError e = pose_error(p, truth);
    if (e.combined > worst.combined) worst = e;
  }
  return worst;
}

std::vector<double> pose_auc(std::span<const double> errors, std::span<const double> thresholds) {
  if (errors.empty()) throw InputError("pose AUC needs at least one error");
  std::vector<double> e(errors.begin(), errors.end());
  std::sort(e.begin(), e.end());
  const double n = static_cast<double>(e.size());
  std::vector<double> xs{0.0};
  std::vector<double> ys{0.0};
  for (std::size_t k = 0; k < e.size(); ++k) {
    xs.push_back(e[k]);
    ys.push_back(static_cast<double>(k + 1) / n);
  }
  std::vector<double> out;
  for (double t : thresholds) {
    if (!(t > 0.0)) throw InputError("AUC thresholds must be positive");
    const std::size_t last =
        static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), t) - xs.begin());
    double area = 0.0;
    for (std::size_t k = 1; k < last; ++k) area += 0.5 * (ys[k] + ys[k - 1]) * (xs[k] - xs[k - 1]);
    area += ys[last - 1] * (t - xs[last - 1]);
    out.push_back(area / t);
  }
  return out;
}

Histogram make_histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw InputError("invalid histogram range");
  Histogram h;
  h.lo = lo;
  h.width = (hi - lo) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double v : values) {
    const double k = std::floor((v - lo) / h.width);
    const std::size_t b = static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(bins - 1)));
    ++h.counts[b];
  }
  return h;
}

DiscretizationReport discretization_mc(int n, std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw InputError("trials must be positive");
  const SearchGrid grid = discretize(n);
  Rng rng(seed);
  DiscretizationReport r;
  r.n = n;
  r.rotation.reserve(trials);
  r.translation.reserve(trials);
  for (std::size_t k = 0; k < trials; ++k) {
    RelativePose truth;
    truth.R = random_rotation(rng, kPi);
    truth.t = random_unit_vector(rng);
    PoseParams q = pose_to_params(truth).params;
    q.v1 = snap_to_grid(grid, q.v1);
    q.v2 = snap_to_grid(grid, q.v2);
    const PoseError e = pose_error(params_to_pose(q), truth);
    r.rotation.push_back(e.rotation);
    r.translation.push_back(e.translation);
    r.max_rotation = std::max(r.max_rotation, e.rotation);
    r.max_translation = std::max(r.max_translation, e.translation);
  }
  return r;
}

std::vector<SensitivityRow> sensitivity_sweep(std::span<const SyntheticScene> scenes,
                                              const SensitivityConfig& config) {
  const SearchGrid grid = discretize(config.grid_n);
  std::vector<SensitivityRow> rows;
  for (double p : config.p_values) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("p values must lie in (0, 1)");
    SensitivityRow row;
    row.p = p;
    SearchOptions opt;
    opt.mechanism = Mechanism::kHcm;
    opt.config = config.mechanism;
    opt.config.p_x = p;
    opt.config.p_y = p;
    opt.threads = config.threads;
    row.c = opt.config.c_x();
    AssignmentConfig ac;
    ac.p_x = p;
    ac.p_y = p;
    for (const SyntheticScene& s : scenes) {
      const ProbabilityAssignment a = assign_marginals(s.graph, ac);
      const SearchResult r = search(s.graph, &a, opt, grid);
      row.errors_deg.push_back(pose_error(r.pose, s.pose).combined_deg());
    }
    if (!row.errors_deg.empty()) row.auc = pose_auc(row.errors_deg, config.thresholds_deg);
    rows.push_back(std::move(row));
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

std::vector<EvalTimeRow> eval_time_bench(const EvalTimeConfig& config) {
  if (config.features == 0 || config.trials == 0 || config.repeats == 0) {
    throw InputError("eval-time benchmark needs features, trials and repeats");
  }
  using Clock = std::chrono::steady_clock;
  const std::size_t f = config.features;
  Rng rng(config.seed);
  std::uniform_real_distribution<double> prob(0.01, 0.1);
  MechanismConfig mc;
  HopcroftKarp hk;
  HcmEvaluator hcm;
  std::vector<EvalTimeRow> rows;
  volatile double sink = 0.0;

  for (std::size_t count : config.inlier_counts) {
    if (count > f * f) throw InputError("more inliers requested than feature pairs");
    std::vector<double> t_mcm;
    std::vector<double> t_hcm;
    for (std::size_t trial = 0; trial < config.trials; ++trial) {
      // Floyd's sampling of distinct pairs.
      std::unordered_set<std::size_t> chosen;
      for (std::size_t r = f * f - count; r < f * f; ++r) {
        const std::size_t v = std::uniform_int_distribution<std::size_t>(0, r)(rng);
        if (!chosen.insert(v).second) chosen.insert(r);
      }
      std::vector<Edge> edges;
      for (std::size_t v : chosen) {
        edges.push_back({static_cast<Index>(v / f), static_cast<Index>(v % f), 1.0, 0.0});
      }
      const AssociationGraph g(f, f, std::move(edges));
      ProbabilityAssignment a;
      a.edge_prob.resize(g.num_edges());
      a.left_total.assign(f, 0.0);
      a.right_total.assign(f, 0.0);
      for (std::size_t e = 0; e < g.num_edges(); ++e) {
        a.edge_prob[e] = prob(rng);
        a.left_total[g.edge(e).i] += a.edge_prob[e];
        a.right_total[g.edge(e).j] += a.edge_prob[e];
      }
      std::vector<std::size_t> ids(g.num_edges());
      std::iota(ids.begin(), ids.end(), std::size_t{0});

      auto t0 = Clock::now();
      for (std::size_t r = 0; r < config.repeats; ++r) sink = sink + static_cast<double>(hk.run(g, ids));
      auto t1 = Clock::now();
      for (std::size_t r = 0; r < config.repeats; ++r) sink = sink + hcm.run(g, ids, a, mc);
      auto t2 = Clock::now();
      const double reps = static_cast<double>(config.repeats);
      t_mcm.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count() / reps);
      t_hcm.push_back(std::chrono::duration<double, std::micro>(t2 - t1).count() / reps);
    }
    rows.push_back({count, median(t_mcm), median(t_hcm)});
  }
  return rows;
}

}  // namespace m2m
