#pragma once

#include <span>
#include <vector>

#include "poolgen/data.hpp"
#include "poolgen/network.hpp"
#include "poolgen/transforms.hpp"

namespace poolgen {

// Test-mode accuracy; channel means are subtracted on the fly. Images are
// split into contiguous chunks across `threads` workers; per-image results
// land in a fixed slot, so the outcome is identical for any thread count.
double evaluate_accuracy(const Network& net, const Tensor& images,
                         std::span<const int> labels,
                         std::span<const double> channel_means,
                         int threads = 1);

struct SweepRow {
  TransformSpec spec;
  double accuracy = 0.0;
};

// Accuracy on each transformed copy of the test images, in grid order.
std::vector<SweepRow> invariance_sweep(const Network& net,
                                       const Dataset& test,
                                       std::span<const TransformSpec> grid,
                                       int threads = 1);

}  // namespace poolgen
