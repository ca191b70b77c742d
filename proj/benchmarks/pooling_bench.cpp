#include <benchmark/benchmark.h>

#include "poolgen/gradcheck.hpp"
#include "poolgen/pooling.hpp"

namespace {

using namespace poolgen;

const Shape kShape{8, 16, 16, 16};
const PoolGeometry kGeom{3, 3, 2, 0};

Tensor bench_input() { return Tensor::gaussian(kShape, 0.0, 1.0, 7); }

void BM_AvgForward(benchmark::State& state) {
  const Tensor in = bench_input();
  for (auto _ : state) {
    auto [out, cache] = avg_pool_forward(in, kGeom);
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(BM_AvgForward);

void BM_MaxForward(benchmark::State& state) {
  const Tensor in = bench_input();
  for (auto _ : state) {
    auto [out, cache] = max_pool_forward(in, kGeom);
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(BM_MaxForward);

void BM_MixedForwardBackward(benchmark::State& state) {
  const Tensor in = bench_input();
  const MixedParams params = MixedParams::init(Granularity::per_layer(), 0.4);
  for (auto _ : state) {
    auto [out, cache] = mixed_pool_forward(in, kGeom, params);
    MixedGrads g = mixed_pool_backward(out, cache, params);
    benchmark::DoNotOptimize(g.input.data().data());
  }
}
BENCHMARK(BM_MixedForwardBackward);

void BM_GatedForwardBackward(benchmark::State& state) {
  const Tensor in = bench_input();
  const GatedParams params =
      GatedParams::init(Granularity::per_layer(), kGeom.region_len(), 0.5, 11);
  for (auto _ : state) {
    auto [out, cache] = gated_pool_forward(in, kGeom, params);
    GatedGrads g = gated_pool_backward(out, cache, params);
    benchmark::DoNotOptimize(g.input.data().data());
  }
}
BENCHMARK(BM_GatedForwardBackward);

void BM_TreeForwardBackward(benchmark::State& state) {
  const Tensor in = bench_input();
  const TreeParams params = TreeParams::init(
      static_cast<int>(state.range(0)), Granularity::per_layer(),
      kGeom.region_len(), 0.5, 13);
  for (auto _ : state) {
    auto [out, cache] = tree_pool_forward(in, kGeom, params);
    TreeGrads g = tree_pool_backward(out, cache, params);
    benchmark::DoNotOptimize(g.input.data().data());
  }
}
BENCHMARK(BM_TreeForwardBackward)->Arg(2)->Arg(3);

void BM_BruteForceGated(benchmark::State& state) {
  const Tensor in = bench_input();
  const GatedParams params =
      GatedParams::init(Granularity::per_layer(), kGeom.region_len(), 0.5, 11);
  for (auto _ : state) {
    Tensor out = gradcheck::brute_force_gated(in, kGeom, params);
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(BM_BruteForceGated);

}  // namespace

BENCHMARK_MAIN();
