#include "gradsim/bank.hpp"
#include "gradsim/enforce.hpp"
#include "gradsim/network.hpp"
#include "gradsim/toy.hpp"

#include <benchmark/benchmark.h>

using namespace gradsim;

namespace {

NetworkSpec spec_of(int width) {
  return NetworkSpec::mlp(2, std::vector<std::size_t>(5, static_cast<std::size_t>(width)), 1);
}

void BM_PerSampleGradient(benchmark::State& state) {
  const auto spec = spec_of(static_cast<int>(state.range(0)));
  const auto params = ParamVector::initialize(spec, 1);
  const std::vector<double> x = {0.6, 0.8};
  for (auto _ : state) {
    benchmark::DoNotOptimize(per_sample_gradient(spec, params, x));
  }
  state.counters["params"] = static_cast<double>(params.size());
}
BENCHMARK(BM_PerSampleGradient)->Arg(16)->Arg(64)->Arg(128);

void BM_HessianVectorProduct(benchmark::State& state) {
  const auto spec = spec_of(static_cast<int>(state.range(0)));
  const auto params = ParamVector::initialize(spec, 1);
  const std::vector<double> x = {0.6, 0.8};
  const std::vector<double> w(params.size(), 0.01);
  for (auto _ : state) {
    benchmark::DoNotOptimize(grad_of_inner_product(spec, params, x, w));
  }
}
BENCHMARK(BM_HessianVectorProduct)->Arg(16)->Arg(64)->Arg(128);

void BM_PairLoss(benchmark::State& state) {
  const auto spec = spec_of(64);
  const auto params = ParamVector::initialize(spec, 1);
  const std::vector<double> x = {0.6, 0.8}, x2 = {-0.8, 0.6};
  for (auto _ : state) {
    benchmark::DoNotOptimize(pair_loss(spec, params, x, x2));
  }
}
BENCHMARK(BM_PairLoss);

void BM_BankBuild(benchmark::State& state) {
  const auto spec = spec_of(64);
  const auto params = ParamVector::initialize(spec, 1);
  const Dataset data = gen_toy({.frequency = 2.0, .n = static_cast<std::size_t>(state.range(0))});
  for (auto _ : state) {
    benchmark::DoNotOptimize(GradientBank::build(spec, params, data));
  }
}
BENCHMARK(BM_BankBuild)->Arg(512)->Unit(benchmark::kMillisecond);

} // namespace
