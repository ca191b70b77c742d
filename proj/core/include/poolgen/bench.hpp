#pragma once

#include <string>
#include <vector>

#include "poolgen/config.hpp"
#include "poolgen/network.hpp"

namespace poolgen {

struct BenchRow {
  std::string variant;
  double ms_per_image = 0.0;
  double overhead_pct = 0.0;  // vs the max-pooling baseline
};

// Replaces the pooling variants of an architecture in layer order; the last
// entry repeats if the architecture has more pooling layers.
std::vector<LayerSpec> substitute_pool_variants(
    std::vector<LayerSpec> arch, const std::vector<PoolVariant>& variants);

// Mean single-image forward+backward wall time for the max baseline and
// each learned variant (mixed, gated, 2-level tree, tree+gated), measured
// over `iters` iterations after warm-up.
std::vector<BenchRow> run_timing_bench(const RunConfig& cfg, int iters,
                                       int warmup = 50);

}  // namespace poolgen
