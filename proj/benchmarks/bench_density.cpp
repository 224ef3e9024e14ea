#include "gradsim/bank.hpp"
#include "gradsim/density.hpp"
#include "gradsim/toy.hpp"

#include <benchmark/benchmark.h>

#include <map>

using namespace gradsim;

namespace {

// Toy-sinusoid bank from a freshly initialized 2-64-64-1 tanh net.
const GradientBank& bank_of(std::size_t n) {
  static std::map<std::size_t, GradientBank> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    const auto spec = NetworkSpec::mlp(2, {64, 64}, 1);
    const auto params = ParamVector::initialize(spec, 0);
    const Dataset data = gen_toy({.frequency = 4.0, .n = n});
    it = cache.emplace(n, GradientBank::build(spec, params, data)).first;
  }
  return it->second;
}

void BM_SoftCountFast(benchmark::State& state) {
  const auto& bank = bank_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(count_soft_fast(bank));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SoftCountFast)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oN);

void BM_SoftCountNaive(benchmark::State& state) {
  const auto& bank = bank_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    double s = 0.0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      s += count_soft_naive(i, bank);
    }
    benchmark::DoNotOptimize(s);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SoftCountNaive)->RangeMultiplier(2)->Range(256, 1024)->Complexity(benchmark::oNSquared)
    ->Unit(benchmark::kMillisecond);

void BM_SimilarityRowsBlocked(benchmark::State& state) {
  const auto& bank = bank_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    double s = 0.0;
    for_each_similarity_row(bank, [&](std::size_t, std::span<const double> row) { s += row[0]; });
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_SimilarityRowsBlocked)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_NeighborReport(benchmark::State& state) {
  const auto& bank = bank_of(static_cast<std::size_t>(state.range(0)));
  DensityConfig cfg;
  cfg.k_nearest = 10;
  for (auto _ : state) {
    benchmark::DoNotOptimize(neighbor_report(bank, cfg));
  }
}
BENCHMARK(BM_NeighborReport)->Arg(1024)->Unit(benchmark::kMillisecond);

} // namespace
