#include <benchmark/benchmark.h>

#include <numeric>
#include <random>
#include <unordered_set>

#include "m2m/evaluation.hpp"
#include "m2m/marginal.hpp"
#include "m2m/matching.hpp"
#include "m2m/mechanisms.hpp"
#include "m2m/search.hpp"
#include "m2m/sweep.hpp"

using namespace m2m;

namespace {

// `count` distinct pairs over features x features with random probabilities.
struct InlierSet {
  AssociationGraph graph;
  ProbabilityAssignment assignment;
  std::vector<std::size_t> ids;
};

InlierSet inlier_set(std::size_t features, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::unordered_set<std::size_t> chosen;
  std::uniform_int_distribution<std::size_t> any(0, features * features - 1);
  while (chosen.size() < count) chosen.insert(any(rng));
  std::vector<Edge> edges;
  for (std::size_t v : chosen)
    edges.push_back({static_cast<Index>(v / features), static_cast<Index>(v % features), 1.0, 0.0});
  InlierSet s{AssociationGraph(features, features, std::move(edges)), {}, {}};
  std::uniform_real_distribution<double> prob(0.01, 0.1);
  s.assignment.edge_prob.resize(count);
  s.assignment.left_total.assign(features, 0.0);
  s.assignment.right_total.assign(features, 0.0);
  for (std::size_t e = 0; e < count; ++e) {
    s.assignment.edge_prob[e] = prob(rng);
    s.assignment.left_total[s.graph.edge(e).i] += s.assignment.edge_prob[e];
    s.assignment.right_total[s.graph.edge(e).j] += s.assignment.edge_prob[e];
  }
  s.ids.resize(count);
  std::iota(s.ids.begin(), s.ids.end(), std::size_t{0});
  return s;
}

SyntheticScene scene(std::uint64_t seed) {
  SceneConfig c;
  c.num_points = 60;
  c.ambiguity = 3;
  c.seed = seed;
  return generate_scene(c);
}

void BM_EvalMcm(benchmark::State& state) {
  const InlierSet s = inlier_set(256, static_cast<std::size_t>(state.range(0)), 1);
  HopcroftKarp hk;
  for (auto _ : state) benchmark::DoNotOptimize(hk.run(s.graph, s.ids));
}
BENCHMARK(BM_EvalMcm)->RangeMultiplier(2)->Range(128, 1024);

void BM_EvalHcm(benchmark::State& state) {
  const InlierSet s = inlier_set(256, static_cast<std::size_t>(state.range(0)), 1);
  HcmEvaluator ev;
  const MechanismConfig c;
  for (auto _ : state) benchmark::DoNotOptimize(ev.run(s.graph, s.ids, s.assignment, c));
}
BENCHMARK(BM_EvalHcm)->RangeMultiplier(2)->Range(128, 1024);

std::vector<IntervalEvent> random_events(const InlierSet& s) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::vector<Edge> e = s.graph.edges();
  std::vector<Arc> iv;
  for (std::size_t k = 0; k < e.size(); ++k) {
    e[k].prob = s.assignment.edge_prob[k];
    double lo = u(rng);
    double hi = lo + 0.3 * u(rng) / kTwoPi;
    iv.push_back({lo, std::min(hi, kTwoPi)});
  }
  return events_from_intervals(iv, e);
}

void BM_SweepCm(benchmark::State& state) {
  const InlierSet s = inlier_set(128, static_cast<std::size_t>(state.range(0)), 3);
  const auto ev = random_events(s);
  SweepWorkspace ws;
  for (auto _ : state) benchmark::DoNotOptimize(ws.cm(ev).score);
}
BENCHMARK(BM_SweepCm)->Arg(256)->Arg(1024);

void BM_SweepHcm(benchmark::State& state) {
  const InlierSet s = inlier_set(128, static_cast<std::size_t>(state.range(0)), 3);
  const auto ev = random_events(s);
  SweepWorkspace ws;
  const MechanismConfig c;
  for (auto _ : state)
    benchmark::DoNotOptimize(ws.hcm(ev, s.assignment.left_total, s.assignment.right_total, c).score);
}
BENCHMARK(BM_SweepHcm)->Arg(256)->Arg(1024);

void BM_SweepMcm(benchmark::State& state) {
  const InlierSet s = inlier_set(128, static_cast<std::size_t>(state.range(0)), 3);
  const auto ev = random_events(s);
  SweepWorkspace ws;
  for (auto _ : state) benchmark::DoNotOptimize(ws.mcm(ev, 128, 128).score);
}
BENCHMARK(BM_SweepMcm)->Arg(256)->Arg(1024);

void BM_AssignMarginals(benchmark::State& state) {
  const SyntheticScene s = scene(4);
  for (auto _ : state) benchmark::DoNotOptimize(assign_marginals(s.graph, {}).reference);
}
BENCHMARK(BM_AssignMarginals);

void BM_SearchCell(benchmark::State& state) {
  const SyntheticScene s = scene(5);
  const ProbabilityAssignment a = assign_marginals(s.graph, {});
  SearchOptions opt;
  opt.mechanism = static_cast<Mechanism>(state.range(0));
  const PoseParams p = pose_to_params(s.pose).params;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_cell(s.graph, &a, opt, p.v1, p.v2).score);
}
BENCHMARK(BM_SearchCell)
    ->Arg(static_cast<int>(Mechanism::kCm))
    ->Arg(static_cast<int>(Mechanism::kMcm))
    ->Arg(static_cast<int>(Mechanism::kHcm));

void BM_SearchGrid(benchmark::State& state) {
  const SyntheticScene s = scene(6);
  const ProbabilityAssignment a = assign_marginals(s.graph, {});
  const SearchGrid grid = discretize(static_cast<int>(state.range(0)));
  SearchOptions opt;
  opt.config.epsilon = deg2rad(1.0);
  opt.config.outlier_range = opt.config.epsilon / 0.03;
  for (auto _ : state) benchmark::DoNotOptimize(search(s.graph, &a, opt, grid).score);
}
BENCHMARK(BM_SearchGrid)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
