// m2m: relative pose from many-to-many associations.
//
// Every command writes a JSON record (with the resolved configuration) to
// stdout or --output and a short summary to stderr. Exit status: 0 success,
// 1 usage, 2 input, 3 numerical failure, 4 empty association set.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "m2m/association.hpp"
#include "m2m/association_file.hpp"
#include "m2m/error.hpp"
#include "m2m/evaluation.hpp"
#include "m2m/marginal.hpp"
#include "m2m/mechanisms.hpp"
#include "m2m/search.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace m2m;

enum ExitCode { kOk = 0, kUsage = 1, kInput = 2, kNumerical = 3, kEmpty = 4 };

struct RunConfig {
  double epsilon_deg = 0.15;
  double outlier_range_deg = 5.0;
  double p_x = 0.1;
  double p_y = 0.1;
  std::size_t k = 5;
  double min_sim = 0.7;
  int n = 32;
  std::string mechanism = "hcm";
  std::uint64_t seed = 0;
  int threads = 0;  // 0: available parallelism

  MechanismConfig mechanism_config() const {
    MechanismConfig c;
    c.epsilon = deg2rad(epsilon_deg);
    c.outlier_range = deg2rad(outlier_range_deg);
    c.p_x = p_x;
    c.p_y = p_y;
    c.validate();
    return c;
  }

  Mechanism parsed_mechanism() const {
    const auto m = parse_mechanism(mechanism);
    if (!m) throw InputError("unknown mechanism '" + mechanism + "'");
    return *m;
  }

  json to_json() const {
    return {{"epsilon_deg", epsilon_deg}, {"outlier_range_deg", outlier_range_deg},
            {"p_x", p_x},                 {"p_y", p_y},
            {"K", k},                     {"min_sim", min_sim},
            {"N", n},                     {"mechanism", mechanism},
            {"seed", seed},               {"threads", threads}};
  }
};

void add_run_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--epsilon_deg", rc.epsilon_deg, "Inlier threshold (degrees)")->capture_default_str();
  cmd->add_option("--outlier_range_deg", rc.outlier_range_deg, "Outlier error range (degrees)")
      ->capture_default_str();
  cmd->add_option("--p_x", rc.p_x, "Prior that a left feature has a true match")->capture_default_str();
  cmd->add_option("--p_y", rc.p_y, "Prior that a right feature has a true match")->capture_default_str();
  cmd->add_option("--K", rc.k, "Mutual nearest neighbours per feature")->capture_default_str();
  cmd->add_option("--min_sim", rc.min_sim, "Minimum cosine similarity")->capture_default_str();
  cmd->add_option("--N", rc.n, "Grid resolution (cell side pi/N)")->capture_default_str()->check(
      CLI::PositiveNumber);
  cmd->add_option("--mechanism", rc.mechanism, "cm | mcm | hcm | mcm-hcm")
      ->capture_default_str()
      ->check(CLI::IsMember({"cm", "mcm", "hcm", "mcm-hcm"}));
  cmd->add_option("--seed", rc.seed, "Random seed")->capture_default_str();
  cmd->add_option("--threads", rc.threads, "Worker threads (0: all cores)")->capture_default_str();
}

struct Output {
  std::string path;  // empty: stdout
  std::string csv;   // empty: no CSV

  void add_flags(CLI::App* cmd, bool with_csv) {
    cmd->add_option("-o,--output", path, "Write the JSON record here instead of stdout");
    if (with_csv) cmd->add_option("--csv", csv, "Also write rows (parameter, threshold_or_bin, value)");
  }

  void write(const json& record) const {
    const std::string text = record.dump(2) + "\n";
    if (path.empty()) {
      std::cout << text;
      return;
    }
    std::ofstream out(path);
    if (!out || !(out << text)) throw InputError("cannot write '" + path + "'");
  }
};

struct CsvRow {
  std::string parameter;
  double threshold_or_bin;
  double value;
};

void write_csv(const std::string& path, const std::vector<CsvRow>& rows) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "parameter,threshold_or_bin,value\n";
  char buf[128];
  for (const CsvRow& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.threshold_or_bin, r.value);
    out << r.parameter << buf;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json pose_json(const RelativePose& pose) {
  json r = json::array();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) r.push_back(pose.R(a, b));
  return {{"R", r}, {"t", {pose.t.x(), pose.t.y(), pose.t.z()}}};
}

json error_json(const PoseError& e) {
  return {{"rotation_deg", rad2deg(e.rotation)},
          {"translation_deg", rad2deg(e.translation)},
          {"combined_deg", e.combined_deg()}};
}

AssociationFile load(const std::string& path) {
  std::vector<std::string> warnings;
  AssociationFile file = read_association_file(path, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  return file;
}

AssociationGraph load_graph(const AssociationFile& file, const RunConfig& rc) {
  MknnOptions mk;
  mk.k = rc.k;
  mk.min_similarity = rc.min_sim;
  AssociationGraph graph = build_graph(file, mk);
  if (graph.empty()) throw EmptyGraphError("association set is empty");
  return graph;
}

AssignmentConfig assignment_config(const RunConfig& rc) {
  AssignmentConfig ac;
  ac.p_x = rc.p_x;
  ac.p_y = rc.p_y;
  return ac;
}

// estimate -------------------------------------------------------------------

int cmd_estimate(const std::string& input, const RunConfig& rc, const Output& out) {
  const MechanismConfig mc = rc.mechanism_config();
  const Mechanism mech = rc.parsed_mechanism();
  const AssociationFile file = load(input);
  const AssociationGraph graph = load_graph(file, rc);

  json record;
  record["command"] = "estimate";
  record["input"] = input;
  record["config"] = rc.to_json();
  record["graph"] = {{"left", graph.num_left()}, {"right", graph.num_right()}, {"edges", graph.num_edges()}};

  std::optional<ProbabilityAssignment> assignment;
  double assign_s = 0.0;
  if (mech == Mechanism::kHcm || mech == Mechanism::kMcmThenHcm) {
    const auto t0 = std::chrono::steady_clock::now();
    assignment = assign_marginals(graph, assignment_config(rc), rc.threads <= 0 ? 1 : rc.threads);
    assign_s = seconds_since(t0);
    record["assignment"] = {{"reference", assignment->reference},
                            {"iterations", assignment->iterations},
                            {"violation", assignment->violation}};
  }

  SearchOptions opt;
  opt.mechanism = mech;
  opt.config = mc;
  opt.threads = rc.threads;
  const SearchGrid grid = discretize(rc.n);
  const SearchResult r = search(graph, assignment ? &*assignment : nullptr, opt, grid);

  json res = {{"mechanism", std::string(to_string(r.mechanism))}, {"score", r.score}};
  if (r.hcm_score) res["hcm_score"] = *r.hcm_score;
  res["pose"] = pose_json(r.pose);
  res["params"] = {{"phi", r.best.params.phi},
                   {"v1", {r.best.params.v1.x(), r.best.params.v1.y()}},
                   {"v2", {r.best.params.v2.x(), r.best.params.v2.y()}}};
  res["inliers"] = r.rescored.inliers.edges.size();
  res["matching_size"] = r.rescored.matching_size;
  res["rescored"] = r.rescored.score;
  res["ties"] = r.ties.size();
  res["tie_overflow"] = r.tie_overflow;
  record["result"] = res;
  record["timing"] = {{"assign_s", assign_s},
                      {"search_s", r.stats.seconds},
                      {"cells", r.stats.cells},
                      {"evaluated", r.stats.evaluated},
                      {"pruned", r.stats.pruned}};

  std::optional<PoseError> err;
  if (file.truth) {
    std::vector<RelativePose> poses;
    if (mech == Mechanism::kMcmThenHcm || r.ties.empty()) {
      poses.push_back(r.pose);
    } else {
      for (const Hypothesis& h : r.ties) poses.push_back(params_to_pose(h.params));
    }
    err = pose_error(poses, file.truth->pose);
    record["error"] = error_json(*err);
  }
  out.write(record);

  std::fprintf(stderr, "%s: score %.6g, %zu inliers, %zu tie(s), %.2f s", std::string(to_string(mech)).c_str(),
               r.score, r.rescored.inliers.edges.size(), r.ties.size(), r.stats.seconds);
  if (err) std::fprintf(stderr, ", error %.3f deg", err->combined_deg());
  std::fprintf(stderr, "\n");
  return kOk;
}

// assign ---------------------------------------------------------------------

int cmd_assign(const std::string& input, const RunConfig& rc, const Output& out) {
  const AssociationFile file = load(input);
  const AssociationGraph graph = load_graph(file, rc);
  const ProbabilityAssignment a = assign_marginals(graph, assignment_config(rc), rc.threads <= 0 ? 1 : rc.threads);

  json edges = json::array();
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const Edge& ed = graph.edge(e);
    edges.push_back({ed.i, ed.j, ed.similarity, a.edge_prob[e]});
  }
  json record = {{"command", "assign"},
                 {"input", input},
                 {"config", rc.to_json()},
                 {"reference", a.reference},
                 {"objective", a.objective()},
                 {"iterations", a.iterations},
                 {"violation", a.violation},
                 {"components", connected_components(graph).size()},
                 {"edges", edges}};
  out.write(record);
  std::fprintf(stderr, "assign: %zu edges, reference %.6g, objective %.6g, %d iterations\n", graph.num_edges(),
               a.reference, a.objective(), a.iterations);
  return kOk;
}

// simulate -------------------------------------------------------------------

AssociationFile scene_to_file(const SyntheticScene& scene) {
  AssociationFile f;
  f.cameras[0].bearings = scene.graph.left();
  f.cameras[1].bearings = scene.graph.right();
  f.edges = scene.graph.edges();
  f.truth = scene.truth;
  return f;
}

json scene_config_json(const SceneConfig& sc) {
  return {{"points", sc.num_points},         {"outlier_fraction", sc.outlier_fraction},
          {"ambiguity", sc.ambiguity},       {"noise_deg", sc.noise_deg},
          {"max_rotation_deg", sc.max_rotation_deg}, {"fov_deg", sc.fov_deg},
          {"seed", sc.seed}};
}

void add_scene_flags(CLI::App* cmd, SceneConfig& sc) {
  cmd->add_option("--points", sc.num_points, "3D points seen by both cameras")->capture_default_str();
  cmd->add_option("--outlier_fraction", sc.outlier_fraction, "Features without a true partner")
      ->capture_default_str();
  cmd->add_option("--ambiguity", sc.ambiguity, "Candidates per feature")->capture_default_str();
  cmd->add_option("--noise_deg", sc.noise_deg, "Bearing noise (degrees)")->capture_default_str();
  cmd->add_option("--max_rotation_deg", sc.max_rotation_deg, "Largest relative rotation")->capture_default_str();
  cmd->add_option("--fov_deg", sc.fov_deg, "Camera field of view")->capture_default_str();
}

int cmd_simulate(SceneConfig sc, std::uint64_t seed, const std::string& path) {
  sc.seed = seed;
  const SyntheticScene scene = generate_scene(sc);
  const AssociationFile f = scene_to_file(scene);
  if (path.empty()) {
    std::cout << format_association_file(f);
  } else {
    write_association_file(path, f);
  }
  std::fprintf(stderr, "simulate: %zu x %zu features, %zu edges, %zu true matches (seed %llu)\n",
               scene.graph.num_left(), scene.graph.num_right(), scene.graph.num_edges(),
               scene.truth.matches.size(), static_cast<unsigned long long>(seed));
  return kOk;
}

// discretize-error -----------------------------------------------------------

int cmd_discretize(int n, std::size_t trials, std::size_t bins, std::uint64_t seed, const Output& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const DiscretizationReport rep = discretization_mc(n, trials, seed);
  const double secs = seconds_since(t0);

  std::vector<double> rot_deg;
  std::vector<double> trans_deg;
  for (double v : rep.rotation) rot_deg.push_back(rad2deg(v));
  for (double v : rep.translation) trans_deg.push_back(rad2deg(v));
  const double hi = std::max(1e-9, std::max(rad2deg(rep.max_rotation), rad2deg(rep.max_translation)));
  const Histogram hr = make_histogram(rot_deg, 0.0, hi, bins);
  const Histogram ht = make_histogram(trans_deg, 0.0, hi, bins);

  std::vector<CsvRow> rows;
  for (std::size_t b = 0; b < bins; ++b) {
    rows.push_back({"rotation_deg", hr.lo + hr.width * static_cast<double>(b), static_cast<double>(hr.counts[b])});
  }
  for (std::size_t b = 0; b < bins; ++b) {
    rows.push_back(
        {"translation_deg", ht.lo + ht.width * static_cast<double>(b), static_cast<double>(ht.counts[b])});
  }
  json record = {{"command", "discretize-error"},
                 {"config", {{"N", n}, {"trials", trials}, {"bins", bins}, {"seed", seed}}},
                 {"max_rotation_deg", rad2deg(rep.max_rotation)},
                 {"max_translation_deg", rad2deg(rep.max_translation)},
                 {"median_rotation_deg", median(rot_deg)},
                 {"median_translation_deg", median(trans_deg)},
                 {"bin_width_deg", hr.width},
                 {"rotation_hist", hr.counts},
                 {"translation_hist", ht.counts},
                 {"seconds", secs}};
  out.write(record);
  write_csv(out.csv, rows);
  std::fprintf(stderr, "discretize-error N=%d: max rotation %.3f deg, max translation %.3f deg (%zu trials)\n", n,
               rad2deg(rep.max_rotation), rad2deg(rep.max_translation), trials);
  return kOk;
}

// bench ----------------------------------------------------------------------

int cmd_bench(EvalTimeConfig cfg, std::uint64_t seed, const Output& out) {
  cfg.seed = seed;
  if (cfg.trials < 100) throw InputError("bench needs at least 100 trials");
  const std::vector<EvalTimeRow> rows = eval_time_bench(cfg);
  json jr = json::array();
  std::vector<CsvRow> csv;
  for (const EvalTimeRow& r : rows) {
    jr.push_back({{"inliers", r.inliers},
                  {"mcm_median_us", r.mcm_median_us},
                  {"hcm_median_us", r.hcm_median_us},
                  {"ratio", r.ratio()}});
    csv.push_back({"mcm_median_us", static_cast<double>(r.inliers), r.mcm_median_us});
    csv.push_back({"hcm_median_us", static_cast<double>(r.inliers), r.hcm_median_us});
    std::fprintf(stderr, "bench N=%zu: mcm %.3f us, hcm %.3f us, ratio %.1f\n", r.inliers, r.mcm_median_us,
                 r.hcm_median_us, r.ratio());
  }
  json record = {{"command", "bench"},
                 {"config",
                  {{"features", cfg.features},
                   {"inliers", cfg.inlier_counts},
                   {"trials", cfg.trials},
                   {"repeats", cfg.repeats},
                   {"seed", seed},
                   {"threads", 1}}},
                 {"rows", jr}};
  out.write(record);
  write_csv(out.csv, csv);
  return kOk;
}

// metrics --------------------------------------------------------------------

int cmd_metrics(std::vector<double> errors, const std::vector<std::string>& records,
                const std::vector<double>& thresholds, const Output& out) {
  for (const std::string& path : records) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    json r;
    try {
      r = json::parse(in);
    } catch (const json::parse_error& e) {
      throw InputError(path + ": " + e.what());
    }
    const json* err = r.contains("error") ? &r["error"] : nullptr;
    if (!err || !err->contains("combined_deg")) throw InputError(path + ": field /error/combined_deg missing");
    errors.push_back((*err)["combined_deg"].get<double>());
  }
  if (errors.empty()) throw InputError("metrics needs at least one error");
  const std::vector<double> auc = pose_auc(errors, thresholds);
  json ja = json::array();
  std::vector<CsvRow> csv;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    ja.push_back({{"threshold_deg", thresholds[k]}, {"auc", auc[k]}});
    csv.push_back({"auc", thresholds[k], auc[k]});
    std::fprintf(stderr, "AUC@%g = %.4f\n", thresholds[k], auc[k]);
  }
  json record = {{"command", "metrics"},
                 {"config", {{"thresholds_deg", thresholds}, {"records", records}}},
                 {"count", errors.size()},
                 {"errors_deg", errors},
                 {"auc", ja}};
  out.write(record);
  write_csv(out.csv, csv);
  return kOk;
}

// sweep ----------------------------------------------------------------------

int cmd_sweep(const RunConfig& rc, SceneConfig sc, std::size_t scenes, const std::vector<double>& p_values,
              const std::vector<double>& thresholds, const Output& out) {
  std::vector<SyntheticScene> ens;
  for (std::size_t s = 0; s < scenes; ++s) {
    sc.seed = rc.seed + s;
    ens.push_back(generate_scene(sc));
  }
  SensitivityConfig cfg;
  cfg.p_values = p_values;
  cfg.thresholds_deg = thresholds;
  cfg.mechanism = rc.mechanism_config();
  cfg.grid_n = rc.n;
  cfg.threads = rc.threads;
  const std::vector<SensitivityRow> rows = sensitivity_sweep(ens, cfg);

  json jr = json::array();
  std::vector<CsvRow> csv;
  for (const SensitivityRow& r : rows) {
    jr.push_back({{"p", r.p}, {"C", r.c}, {"errors_deg", r.errors_deg}, {"auc", r.auc}});
    for (std::size_t k = 0; k < r.auc.size(); ++k) csv.push_back({"p=" + std::to_string(r.p), thresholds[k], r.auc[k]});
    std::fprintf(stderr, "p=%.2f C=%.2f", r.p, r.c);
    for (std::size_t k = 0; k < r.auc.size(); ++k) std::fprintf(stderr, " AUC@%g=%.3f", thresholds[k], r.auc[k]);
    std::fprintf(stderr, "\n");
  }
  json config = rc.to_json();
  config["scene"] = scene_config_json(sc);
  config["scene"].erase("seed");
  config["scenes"] = scenes;
  config["p_values"] = p_values;
  config["thresholds_deg"] = thresholds;
  out.write({{"command", "sweep"}, {"config", config}, {"rows", jr}});
  write_csv(out.csv, csv);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative pose from many-to-many feature associations"};
  app.require_subcommand(1);

  RunConfig rc;
  Output out;
  std::string input;

  auto* estimate = app.add_subcommand("estimate", "Estimate the relative pose of an association file");
  estimate->add_option("input", input, "Association file")->required();
  add_run_flags(estimate, rc);
  out.add_flags(estimate, false);

  auto* assign = app.add_subcommand("assign", "Assign marginal probabilities to associations");
  assign->add_option("input", input, "Association file")->required();
  add_run_flags(assign, rc);
  out.add_flags(assign, false);

  SceneConfig sc;
  std::uint64_t seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic association file with ground truth");
  add_scene_flags(simulate, sc);
  simulate->add_option("--seed", seed, "Random seed")->capture_default_str();
  simulate->add_option("-o,--output", out.path, "Output file (default stdout)");

  int disc_n = 32;
  std::size_t disc_trials = 10000;
  std::size_t disc_bins = 50;
  auto* disc = app.add_subcommand("discretize-error", "Monte-Carlo grid discretization error");
  disc->add_option("--N", disc_n, "Grid resolution")->capture_default_str()->check(CLI::PositiveNumber);
  disc->add_option("--trials", disc_trials, "Random poses")->capture_default_str()->check(CLI::PositiveNumber);
  disc->add_option("--bins", disc_bins, "Histogram bins")->capture_default_str()->check(CLI::PositiveNumber);
  disc->add_option("--seed", seed, "Random seed")->capture_default_str();
  out.add_flags(disc, true);

  EvalTimeConfig bench_cfg;
  auto* bench = app.add_subcommand("bench", "Post-inlier evaluation time, MCM against HCM");
  bench->add_option("--features", bench_cfg.features, "Features per image")->capture_default_str();
  bench->add_option("--inliers", bench_cfg.inlier_counts, "Inlier counts")->capture_default_str();
  bench->add_option("--trials", bench_cfg.trials, "Timed samples per count")->capture_default_str();
  bench->add_option("--repeats", bench_cfg.repeats, "Evaluations per sample")->capture_default_str();
  bench->add_option("--seed", seed, "Random seed")->capture_default_str();
  out.add_flags(bench, true);

  std::vector<double> errors;
  std::vector<std::string> records;
  std::vector<double> thresholds{10.0, 20.0, 30.0};
  auto* metrics = app.add_subcommand("metrics", "Pose AUC over errors or estimate records");
  metrics->add_option("--errors", errors, "Combined errors (degrees)");
  metrics->add_option("records", records, "Estimate records with an error field");
  metrics->add_option("--thresholds", thresholds, "AUC thresholds (degrees)")->capture_default_str();
  out.add_flags(metrics, true);

  std::size_t scenes = 20;
  std::vector<double> p_values{0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7};
  auto* sweep = app.add_subcommand("sweep", "HCM accuracy across prior probabilities");
  add_run_flags(sweep, rc);
  add_scene_flags(sweep, sc);
  sweep->add_option("--scenes", scenes, "Synthetic scenes (seeds seed .. seed + scenes - 1)")->capture_default_str();
  sweep->add_option("--p", p_values, "Prior values")->capture_default_str();
  sweep->add_option("--thresholds", thresholds, "AUC thresholds (degrees)")->capture_default_str();
  out.add_flags(sweep, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*estimate) return cmd_estimate(input, rc, out);
    if (*assign) return cmd_assign(input, rc, out);
    if (*simulate) return cmd_simulate(sc, seed, out.path);
    if (*disc) return cmd_discretize(disc_n, disc_trials, disc_bins, seed, out);
    if (*bench) return cmd_bench(bench_cfg, seed, out);
    if (*metrics) return cmd_metrics(errors, records, thresholds, out);
    if (*sweep) return cmd_sweep(rc, sc, scenes, p_values, thresholds, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::kInput:
      case ErrorKind::kLimit:
        return kInput;
      case ErrorKind::kNumerical:
        return kNumerical;
      case ErrorKind::kEmpty:
        return kEmpty;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
  return kUsage;
}
