// Serial reference vs OpenMP path for the hot kernels.
//   ./bench_kernels --benchmark_filter=Gram

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "ddetect/forest.hpp"
#include "ddetect/kernels.hpp"
#include "ddetect/regressor.hpp"

using namespace ddetect;

namespace {

Matrix uniform(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

kernels::Exec exec_of(const benchmark::State& state) {
  return state.range(1) == 0 ? kernels::Exec::serial : kernels::Exec::parallel;
}

void Gram(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = uniform(n, 10, 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::rbf_gram(a, a, 0.1, exec_of(state)));
  state.SetLabel(exec_of(state) == kernels::Exec::serial ? "serial" : "parallel");
}

void ForestFit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto X = uniform(n, 2, 2);
  Matrix Y(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 4; ++c) Y(i, c) = std::sin(X(i, 0) * static_cast<double>(c + 1)) + X(i, 1);
  }
  forest::ForestConfig cfg;
  cfg.n_trees = 20;
  for (auto _ : state) benchmark::DoNotOptimize(forest::Forest::fit(X, Y, cfg, exec_of(state)));
  state.SetLabel(exec_of(state) == kernels::Exec::serial ? "serial" : "parallel");
}

void ForestPredict(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto X = uniform(5000, 2, 3);
  Matrix Y(5000, 4);
  for (std::size_t i = 0; i < 5000; ++i) {
    for (std::size_t c = 0; c < 4; ++c) Y(i, c) = X(i, 0) * static_cast<double>(c) + X(i, 1);
  }
  forest::ForestConfig cfg;
  cfg.n_trees = 50;
  models::Regressor r;
  r.kind = models::ModelKind::forest;
  r.channels = {"a", "b", "c", "d"};
  r.model = forest::Forest::fit(X, Y, cfg);
  const auto Q = uniform(n, 2, 4);
  for (auto _ : state) benchmark::DoNotOptimize(r.predict_rows(Q, exec_of(state)));
  state.SetLabel(exec_of(state) == kernels::Exec::serial ? "serial" : "parallel");
}

}  // namespace

BENCHMARK(Gram)->ArgsProduct({{500, 2000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(ForestFit)->ArgsProduct({{5000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(ForestPredict)->ArgsProduct({{12000}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
