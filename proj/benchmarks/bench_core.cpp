#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "coherence/delay.hpp"
#include "coherence/kernel.hpp"
#include "coherence/spectral.hpp"
#include "coherence/trajectory.hpp"

namespace {

using namespace coherence;

const StateTrajectory& l63(std::size_t rows) {
  static std::vector<std::unique_ptr<StateTrajectory>> cache;
  for (const auto& t : cache) {
    if (t->size() == rows) return *t;
  }
  const std::vector<double> x0{1.0, 1.0, 1.0};
  cache.push_back(std::make_unique<StateTrajectory>(integrate_l63(x0, 0.01, rows, 10.0)));
  return *cache.back();
}

std::shared_ptr<const SparseDistanceGraph> graph_for(std::size_t n, std::size_t q, std::size_t k) {
  const auto& traj = l63(n + q - 1);
  return std::make_shared<const SparseDistanceGraph>(build_knn_graph(traj, DelayConfig(q, 0.01), k));
}

void BM_KnnScan(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto q = static_cast<std::size_t>(state.range(1));
  const auto& traj = l63(n + q - 1);
  const DelayConfig cfg(q, 0.01);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_knn_graph(traj, cfg, default_knn(n)));
  }
}
BENCHMARK(BM_KnnScan)->Args({2000, 1})->Args({2000, 100})->Args({4000, 100})->Unit(benchmark::kMillisecond);

void BM_TuneBandwidth(benchmark::State& state) {
  const auto graph = graph_for(static_cast<std::size_t>(state.range(0)), 50, 100);
  for (auto _ : state) benchmark::DoNotOptimize(tune_bandwidth(*graph));
}
BENCHMARK(BM_TuneBandwidth)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond);

void BM_MarkovMatvec(benchmark::State& state) {
  const auto graph = graph_for(static_cast<std::size_t>(state.range(0)), 50, 100);
  KernelSettings settings;
  const KernelBuild kernel = build_kernel(graph, settings);
  const std::size_t n = kernel.factor->n();
  std::vector<double> x(n, 1.0), y(n), scratch(n);
  for (auto _ : state) {
    kernel.factor->apply_markov(x, y, scratch);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<benchmark::IterationCount>(graph->nnz()));
}
BENCHMARK(BM_MarkovMatvec)->Arg(2000)->Arg(8000)->Unit(benchmark::kMicrosecond);

void BM_LeadingEigenpairs(benchmark::State& state) {
  const auto graph = graph_for(static_cast<std::size_t>(state.range(0)), 50, 100);
  KernelSettings settings;
  const KernelBuild kernel = build_kernel(graph, settings);
  for (auto _ : state) benchmark::DoNotOptimize(leading_eigenpairs(*kernel.factor, 21));
}
BENCHMARK(BM_LeadingEigenpairs)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
