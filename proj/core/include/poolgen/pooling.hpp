#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "poolgen/tensor.hpp"

namespace poolgen {

// Six pooling operators over NCHW tensors. Each region is a length-N vector
// x (N = region_h * region_w, padded slots fixed at 0.0):
//
//   average     (1/N) * sum_i x_i
//   max         max_i x_i, ties broken to the first slot in row-major order
//   stochastic  train: sample slot i with probability x_i / sum(x);
//               test: probability-weighted average
//   mixed       a * max(x) + (1 - a) * avg(x), learned scalar a in [0, 1]
//   gated       s * max(x) + (1 - s) * avg(x), s = sigmoid(omega . x) with a
//               learned gating mask omega of length N
//   tree        complete binary tree; leaves are learned filters v_m . x,
//               internal nodes blend children with sigmoid(omega_m . x)
//
// Every operator has a backward pass to its input, and the learned ones also
// produce exact parameter gradients. Backward passes replay the forward
// region enumeration, so a cache is only valid for the geometry and batch
// that produced it.

enum class PoolOp { Average, Max, Stochastic, Mixed, Gated, Tree };

enum class Mode { Train, Test };

inline double sigmoid(double z) {
  // Branch form stays finite for large |z|.
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Which structural unit shares one parameter group: one group per pooling
// layer, or one per (channel, output row, output col) combination.
enum class GranularityKind { PerLayer, PerLayerChannelRegion };

struct Granularity {
  GranularityKind kind = GranularityKind::PerLayer;
  int channels = 0;
  int out_rows = 0;
  int out_cols = 0;

  static Granularity per_layer() { return {}; }
  static Granularity per_layer_channel_region(int c, int oh, int ow) {
    return {GranularityKind::PerLayerChannelRegion, c, oh, ow};
  }

  int group_count() const {
    return kind == GranularityKind::PerLayer ? 1
                                             : channels * out_rows * out_cols;
  }
  int group_index(int c, int oy, int ox) const {
    return kind == GranularityKind::PerLayer
               ? 0
               : (c * out_rows + oy) * out_cols + ox;
  }
  // Throws when the configured grid disagrees with the actual pooled dims.
  void check(int channels_actual, int out_h, int out_w) const;
  bool operator==(const Granularity&) const = default;
};

// Learned mixing proportions, one per parameter group, each kept in [0, 1]
// by projection after every optimizer step.
struct MixedParams {
  std::vector<double> a;
  Granularity granularity;

  static MixedParams init(const Granularity& g, double a0 = 0.5);
};

// Clips every mixing proportion to [0, 1].
void project_params(MixedParams& params);

// Learned gating masks, one length-N mask per parameter group, stored flat.
struct GatedParams {
  std::vector<double> omega;
  int region_len = 0;
  Granularity granularity;

  static GatedParams init(const Granularity& g, int region_len, double stddev,
                          std::uint64_t seed);
  std::span<const double> mask(int group) const {
    return {omega.data() + static_cast<std::size_t>(group) * region_len,
            static_cast<std::size_t>(region_len)};
  }
  std::span<double> mask(int group) {
    return {omega.data() + static_cast<std::size_t>(group) * region_len,
            static_cast<std::size_t>(region_len)};
  }
};

// Complete binary tree of pre-specified depth. Heap node order: node 0 is
// the root, children of node i are 2i+1 and 2i+2; nodes below
// internal_count() are internal, the rest are leaves. For `levels` levels
// there are 2^(levels-1) leaf filters and 2^(levels-1)-1 gating masks,
// each of length N, stored flat per parameter group.
struct TreeParams {
  int levels = 2;
  int region_len = 0;
  std::vector<double> leaves;
  std::vector<double> masks;
  Granularity granularity;

  static TreeParams init(int levels, const Granularity& g, int region_len,
                         double stddev, std::uint64_t seed);

  int leaf_count() const { return 1 << (levels - 1); }
  int internal_count() const { return leaf_count() - 1; }
  int node_count() const { return 2 * leaf_count() - 1; }

  std::span<const double> leaf(int group, int leaf_ordinal) const {
    const std::size_t off =
        (static_cast<std::size_t>(group) * leaf_count() + leaf_ordinal) *
        region_len;
    return {leaves.data() + off, static_cast<std::size_t>(region_len)};
  }
  std::span<const double> mask(int group, int node) const {
    const std::size_t off =
        (static_cast<std::size_t>(group) * internal_count() + node) *
        region_len;
    return {masks.data() + off, static_cast<std::size_t>(region_len)};
  }
};

// Saved forward state consumed by the matching backward pass.
struct PoolCache {
  PoolOp op = PoolOp::Average;
  Mode mode = Mode::Train;
  Shape input_shape;
  PoolGeometry geom;
  int out_h = 0;
  int out_w = 0;

  std::vector<std::int32_t> argmax;    // max / mixed / gated
  std::vector<std::int32_t> sampled;   // stochastic, train mode
  std::vector<double> region_max;      // mixed / gated
  std::vector<double> region_avg;      // mixed / gated
  std::vector<double> sigma;           // gated: 1 per region; tree: per node
  std::vector<double> region_values;   // gated / tree: x per region
  std::vector<double> node_values;     // tree: per-node subtree outputs

  std::size_t regions() const {
    return static_cast<std::size_t>(input_shape.n) * input_shape.c * out_h *
           out_w;
  }
};

std::pair<Tensor, PoolCache> avg_pool_forward(const Tensor& input,
                                              const PoolGeometry& geom);
Tensor avg_pool_backward(const Tensor& grad_out, const PoolCache& cache);

std::pair<Tensor, PoolCache> max_pool_forward(const Tensor& input,
                                              const PoolGeometry& geom);
Tensor max_pool_backward(const Tensor& grad_out, const PoolCache& cache);

// Train mode draws one uniform per region, in region order, from an Rng
// seeded with `seed`; the sampled slot is the smallest i whose activation
// prefix sum exceeds u * sum(x). An all-zero region falls back to a uniform
// slot. Activations must be non-negative.
std::pair<Tensor, PoolCache> stochastic_pool_forward(const Tensor& input,
                                                     const PoolGeometry& geom,
                                                     Mode mode,
                                                     std::uint64_t seed);
Tensor stochastic_pool_backward(const Tensor& grad_out,
                                const PoolCache& cache);

std::pair<Tensor, PoolCache> mixed_pool_forward(const Tensor& input,
                                                const PoolGeometry& geom,
                                                const MixedParams& params);
struct MixedGrads {
  Tensor input;
  std::vector<double> a;
};
MixedGrads mixed_pool_backward(const Tensor& grad_out, const PoolCache& cache,
                               const MixedParams& params);

std::pair<Tensor, PoolCache> gated_pool_forward(const Tensor& input,
                                                const PoolGeometry& geom,
                                                const GatedParams& params);
struct GatedGrads {
  Tensor input;
  std::vector<double> omega;
};
GatedGrads gated_pool_backward(const Tensor& grad_out, const PoolCache& cache,
                               const GatedParams& params);

std::pair<Tensor, PoolCache> tree_pool_forward(const Tensor& input,
                                               const PoolGeometry& geom,
                                               const TreeParams& params);
struct TreeGrads {
  Tensor input;
  std::vector<double> leaves;
  std::vector<double> masks;
};
TreeGrads tree_pool_backward(const Tensor& grad_out, const PoolCache& cache,
                             const TreeParams& params);

}  // namespace poolgen
