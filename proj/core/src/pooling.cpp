#include "poolgen/pooling.hpp"

#include <stdexcept>
#include <string>

#include "poolgen/rng.hpp"

namespace poolgen {

namespace {

const char* op_name(PoolOp op) {
  switch (op) {
    case PoolOp::Average: return "average";
    case PoolOp::Max: return "max";
    case PoolOp::Stochastic: return "stochastic";
    case PoolOp::Mixed: return "mixed";
    case PoolOp::Gated: return "gated";
    case PoolOp::Tree: return "tree";
  }
  return "?";
}

PoolCache make_cache(PoolOp op, const RegionScanner& scan) {
  PoolCache cache;
  cache.op = op;
  cache.input_shape = scan.input_shape();
  cache.geom = scan.geometry();
  cache.out_h = scan.out_h();
  cache.out_w = scan.out_w();
  return cache;
}

Shape output_shape(const RegionScanner& scan) {
  return {scan.input_shape().n, scan.input_shape().c, scan.out_h(),
          scan.out_w()};
}

void check_backward(const Tensor& grad_out, const PoolCache& cache,
                    PoolOp expected) {
  if (cache.op != expected) {
    throw std::invalid_argument(std::string("pool cache holds ") +
                                op_name(cache.op) + " state, expected " +
                                op_name(expected));
  }
  const Shape want{cache.input_shape.n, cache.input_shape.c, cache.out_h,
                   cache.out_w};
  if (!(grad_out.shape() == want)) {
    throw std::invalid_argument("grad_out shape " + grad_out.shape().str() +
                                " does not match pooled shape " + want.str());
  }
}

int first_argmax(std::span<const double> values) {
  int am = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[am]) am = i;
  }
  return am;
}

double region_sum(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Shared loop skeleton: visits regions in (n, c, oy, ox) order with scratch
// value/index buffers and the flat region ordinal.
template <typename Fn>
void scan_regions(const Tensor& input, const RegionScanner& scan, Fn&& fn) {
  const int len = scan.region_len();
  std::vector<double> vals(len);
  std::vector<std::ptrdiff_t> idx(len);
  std::size_t r = 0;
  const Shape& s = scan.input_shape();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < scan.out_h(); ++oy)
        for (int ox = 0; ox < scan.out_w(); ++ox, ++r) {
          scan.gather(input, n, c, oy, ox, vals, idx);
          fn(r, n, c, oy, ox, std::span<const double>(vals),
             std::span<const std::ptrdiff_t>(idx));
        }
}

// Backward-side mirror: replays the same enumeration against a zero value
// buffer (only indices matter) using the cached geometry.
template <typename Fn>
void scan_cached_regions(const PoolCache& cache, Fn&& fn) {
  RegionScanner scan(cache.input_shape, cache.geom);
  const Tensor probe(cache.input_shape);
  scan_regions(probe, scan, std::forward<Fn>(fn));
}

}  // namespace

void Granularity::check(int channels_actual, int out_h, int out_w) const {
  if (kind == GranularityKind::PerLayer) return;
  if (channels != channels_actual || out_rows != out_h || out_cols != out_w) {
    throw std::invalid_argument(
        "granularity grid (" + std::to_string(channels) + "," +
        std::to_string(out_rows) + "," + std::to_string(out_cols) +
        ") disagrees with pooled dims (" + std::to_string(channels_actual) +
        "," + std::to_string(out_h) + "," + std::to_string(out_w) + ")");
  }
}

MixedParams MixedParams::init(const Granularity& g, double a0) {
  MixedParams p;
  p.granularity = g;
  p.a.assign(g.group_count(), a0);
  return p;
}

void project_params(MixedParams& params) {
  for (double& v : params.a) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
  }
}

GatedParams GatedParams::init(const Granularity& g, int region_len,
                              double stddev, std::uint64_t seed) {
  GatedParams p;
  p.granularity = g;
  p.region_len = region_len;
  Rng rng(seed);
  p.omega.resize(static_cast<std::size_t>(g.group_count()) * region_len);
  for (double& v : p.omega) v = rng.normal(0.0, stddev);
  return p;
}

TreeParams TreeParams::init(int levels, const Granularity& g, int region_len,
                            double stddev, std::uint64_t seed) {
  if (levels < 2) {
    throw std::invalid_argument("tree pooling requires at least 2 levels");
  }
  TreeParams p;
  p.levels = levels;
  p.granularity = g;
  p.region_len = region_len;
  Rng rng(seed);
  p.leaves.resize(static_cast<std::size_t>(g.group_count()) * p.leaf_count() *
                  region_len);
  p.masks.resize(static_cast<std::size_t>(g.group_count()) *
                 p.internal_count() * region_len);
  for (double& v : p.leaves) v = rng.normal(0.0, stddev);
  for (double& v : p.masks) v = rng.normal(0.0, stddev);
  return p;
}

// ---------------------------------------------------------------- average

std::pair<Tensor, PoolCache> avg_pool_forward(const Tensor& input,
                                              const PoolGeometry& geom) {
  RegionScanner scan(input.shape(), geom);
  Tensor out(output_shape(scan));
  PoolCache cache = make_cache(PoolOp::Average, scan);
  const double len = scan.region_len();
  scan_regions(input, scan,
               [&](std::size_t, int n, int c, int oy, int ox,
                   std::span<const double> vals,
                   std::span<const std::ptrdiff_t>) {
                 out.at(n, c, oy, ox) = region_sum(vals) / len;
               });
  return {std::move(out), std::move(cache)};
}

Tensor avg_pool_backward(const Tensor& grad_out, const PoolCache& cache) {
  check_backward(grad_out, cache, PoolOp::Average);
  Tensor grad_in(cache.input_shape);
  const double len = cache.geom.region_len();
  scan_cached_regions(
      cache, [&](std::size_t, int n, int c, int oy, int ox,
                 std::span<const double>, std::span<const std::ptrdiff_t> idx) {
        const double share = grad_out.at(n, c, oy, ox) * (1.0 / len);
        for (std::ptrdiff_t i : idx) {
          if (i >= 0) grad_in[static_cast<std::size_t>(i)] += share;
        }
      });
  return grad_in;
}

// -------------------------------------------------------------------- max

std::pair<Tensor, PoolCache> max_pool_forward(const Tensor& input,
                                              const PoolGeometry& geom) {
  RegionScanner scan(input.shape(), geom);
  Tensor out(output_shape(scan));
  PoolCache cache = make_cache(PoolOp::Max, scan);
  cache.argmax.resize(scan.region_count());
  scan_regions(input, scan,
               [&](std::size_t r, int n, int c, int oy, int ox,
                   std::span<const double> vals,
                   std::span<const std::ptrdiff_t>) {
                 const int am = first_argmax(vals);
                 cache.argmax[r] = am;
                 out.at(n, c, oy, ox) = vals[am];
               });
  return {std::move(out), std::move(cache)};
}

Tensor max_pool_backward(const Tensor& grad_out, const PoolCache& cache) {
  check_backward(grad_out, cache, PoolOp::Max);
  Tensor grad_in(cache.input_shape);
  scan_cached_regions(
      cache,
      [&](std::size_t r, int n, int c, int oy, int ox, std::span<const double>,
          std::span<const std::ptrdiff_t> idx) {
        const std::ptrdiff_t slot = idx[cache.argmax[r]];
        if (slot >= 0) {
          grad_in[static_cast<std::size_t>(slot)] += grad_out.at(n, c, oy, ox);
        }
      });
  return grad_in;
}

// ------------------------------------------------------------- stochastic

std::pair<Tensor, PoolCache> stochastic_pool_forward(const Tensor& input,
                                                     const PoolGeometry& geom,
                                                     Mode mode,
                                                     std::uint64_t seed) {
  RegionScanner scan(input.shape(), geom);
  Tensor out(output_shape(scan));
  PoolCache cache = make_cache(PoolOp::Stochastic, scan);
  cache.mode = mode;
  if (mode == Mode::Train) cache.sampled.resize(scan.region_count());
  Rng rng(seed);
  const int len = scan.region_len();
  scan_regions(
      input, scan,
      [&](std::size_t r, int n, int c, int oy, int ox,
          std::span<const double> vals, std::span<const std::ptrdiff_t>) {
        for (double v : vals) {
          if (v < 0.0) {
            throw std::invalid_argument(
                "stochastic pooling requires non-negative activations");
          }
        }
        const double total = region_sum(vals);
        if (mode == Mode::Train) {
          const double u = rng.uniform();
          int pick = len - 1;
          if (total > 0.0) {
            const double cut = u * total;
            double acc = 0.0;
            for (int i = 0; i < len; ++i) {
              acc += vals[i];
              if (acc > cut) {
                pick = i;
                break;
              }
            }
          } else {
            pick = static_cast<int>(u * len);
            if (pick >= len) pick = len - 1;
          }
          cache.sampled[r] = pick;
          out.at(n, c, oy, ox) = vals[pick];
        } else {
          // Probability-weighted average: sum_i x_i * (x_i / total).
          out.at(n, c, oy, ox) = total > 0.0 ? dot(vals, vals) / total : 0.0;
        }
      });
  return {std::move(out), std::move(cache)};
}

Tensor stochastic_pool_backward(const Tensor& grad_out,
                                const PoolCache& cache) {
  check_backward(grad_out, cache, PoolOp::Stochastic);
  if (cache.mode != Mode::Train) {
    throw std::invalid_argument(
        "stochastic pooling backward requires a train-mode cache");
  }
  Tensor grad_in(cache.input_shape);
  scan_cached_regions(
      cache,
      [&](std::size_t r, int n, int c, int oy, int ox, std::span<const double>,
          std::span<const std::ptrdiff_t> idx) {
        const std::ptrdiff_t slot = idx[cache.sampled[r]];
        if (slot >= 0) {
          grad_in[static_cast<std::size_t>(slot)] += grad_out.at(n, c, oy, ox);
        }
      });
  return grad_in;
}

// ------------------------------------------------------------------ mixed

std::pair<Tensor, PoolCache> mixed_pool_forward(const Tensor& input,
                                                const PoolGeometry& geom,
                                                const MixedParams& params) {
  RegionScanner scan(input.shape(), geom);
  params.granularity.check(input.shape().c, scan.out_h(), scan.out_w());
  if (static_cast<int>(params.a.size()) != params.granularity.group_count()) {
    throw std::invalid_argument("mixed pooling parameter count does not "
                                "match granularity");
  }
  for (double a : params.a) {
    if (a < 0.0 || a > 1.0) {
      throw std::invalid_argument("mixed pooling proportion outside [0,1]");
    }
  }
  Tensor out(output_shape(scan));
  PoolCache cache = make_cache(PoolOp::Mixed, scan);
  cache.argmax.resize(scan.region_count());
  cache.region_max.resize(scan.region_count());
  cache.region_avg.resize(scan.region_count());
  const double len = scan.region_len();
  scan_regions(input, scan,
               [&](std::size_t r, int n, int c, int oy, int ox,
                   std::span<const double> vals,
                   std::span<const std::ptrdiff_t>) {
                 const int am = first_argmax(vals);
                 const double mx = vals[am];
                 const double av = region_sum(vals) / len;
                 cache.argmax[r] = am;
                 cache.region_max[r] = mx;
                 cache.region_avg[r] = av;
                 const double a = params.a[params.granularity.group_index(
                     c, oy, ox)];
                 out.at(n, c, oy, ox) = a * mx + (1.0 - a) * av;
               });
  return {std::move(out), std::move(cache)};
}

MixedGrads mixed_pool_backward(const Tensor& grad_out, const PoolCache& cache,
                               const MixedParams& params) {
  check_backward(grad_out, cache, PoolOp::Mixed);
  params.granularity.check(cache.input_shape.c, cache.out_h, cache.out_w);
  MixedGrads grads{Tensor(cache.input_shape),
                   std::vector<double>(params.a.size(), 0.0)};
  const double len = cache.geom.region_len();
  scan_cached_regions(
      cache,
      [&](std::size_t r, int n, int c, int oy, int ox, std::span<const double>,
          std::span<const std::ptrdiff_t> idx) {
        const double delta = grad_out.at(n, c, oy, ox);
        const int g = params.granularity.group_index(c, oy, ox);
        const double a = params.a[g];
        grads.a[g] += delta * (cache.region_max[r] - cache.region_avg[r]);
        const double base = delta * ((1.0 - a) / len);
        const double peak = delta * a;
        for (int i = 0; i < static_cast<int>(idx.size()); ++i) {
          if (idx[i] < 0) continue;
          double v = base;
          if (i == cache.argmax[r]) v += peak;
          grads.input[static_cast<std::size_t>(idx[i])] += v;
        }
      });
  return grads;
}

// ------------------------------------------------------------------ gated

std::pair<Tensor, PoolCache> gated_pool_forward(const Tensor& input,
                                                const PoolGeometry& geom,
                                                const GatedParams& params) {
  RegionScanner scan(input.shape(), geom);
  params.granularity.check(input.shape().c, scan.out_h(), scan.out_w());
  if (params.region_len != scan.region_len()) {
    throw std::invalid_argument(
        "gating mask length " + std::to_string(params.region_len) +
        " does not match region length " + std::to_string(scan.region_len()));
  }
  if (params.omega.size() !=
      static_cast<std::size_t>(params.granularity.group_count()) *
          params.region_len) {
    throw std::invalid_argument("gating mask storage does not match "
                                "granularity");
  }
  Tensor out(output_shape(scan));
  PoolCache cache = make_cache(PoolOp::Gated, scan);
  const std::size_t regions = scan.region_count();
  const int len = scan.region_len();
  cache.argmax.resize(regions);
  cache.region_max.resize(regions);
  cache.region_avg.resize(regions);
  cache.sigma.resize(regions);
  cache.region_values.resize(regions * len);
  const double len_d = len;
  scan_regions(
      input, scan,
      [&](std::size_t r, int n, int c, int oy, int ox,
          std::span<const double> vals, std::span<const std::ptrdiff_t>) {
        const int am = first_argmax(vals);
        const double mx = vals[am];
        const double av = region_sum(vals) / len_d;
        const auto mask = params.mask(params.granularity.group_index(c, oy, ox));
        const double s = sigmoid(dot(mask, vals));
        cache.argmax[r] = am;
        cache.region_max[r] = mx;
        cache.region_avg[r] = av;
        cache.sigma[r] = s;
        std::copy(vals.begin(), vals.end(),
                  cache.region_values.begin() + r * len);
        out.at(n, c, oy, ox) = s * mx + (1.0 - s) * av;
      });
  return {std::move(out), std::move(cache)};
}

GatedGrads gated_pool_backward(const Tensor& grad_out, const PoolCache& cache,
                               const GatedParams& params) {
  check_backward(grad_out, cache, PoolOp::Gated);
  params.granularity.check(cache.input_shape.c, cache.out_h, cache.out_w);
  GatedGrads grads{Tensor(cache.input_shape),
                   std::vector<double>(params.omega.size(), 0.0)};
  const int len = cache.geom.region_len();
  const double len_d = len;
  scan_cached_regions(
      cache,
      [&](std::size_t r, int n, int c, int oy, int ox, std::span<const double>,
          std::span<const std::ptrdiff_t> idx) {
        const double delta = grad_out.at(n, c, oy, ox);
        const int g = params.granularity.group_index(c, oy, ox);
        const auto mask = params.mask(g);
        const double s = cache.sigma[r];
        const double span = cache.region_max[r] - cache.region_avg[r];
        // d out / d (omega . x) for this region, times delta.
        const double gate = delta * s * (1.0 - s) * span;
        const double base = delta * ((1.0 - s) / len_d);
        const double peak = delta * s;
        const double* x = cache.region_values.data() + r * len;
        double* gw = grads.omega.data() + static_cast<std::size_t>(g) * len;
        for (int i = 0; i < len; ++i) {
          gw[i] += gate * x[i];
          if (idx[i] < 0) continue;
          double v = gate * mask[i] + base;
          if (i == cache.argmax[r]) v += peak;
          grads.input[static_cast<std::size_t>(idx[i])] += v;
        }
      });
  return grads;
}

// ------------------------------------------------------------------- tree

namespace {

void check_tree(const TreeParams& params, int region_len) {
  if (params.levels < 2) {
    throw std::invalid_argument("tree pooling requires at least 2 levels");
  }
  if (params.region_len != region_len) {
    throw std::invalid_argument(
        "tree filter length " + std::to_string(params.region_len) +
        " does not match region length " + std::to_string(region_len));
  }
  const std::size_t want_leaves =
      static_cast<std::size_t>(params.granularity.group_count()) *
      params.leaf_count() * region_len;
  const std::size_t want_masks =
      static_cast<std::size_t>(params.granularity.group_count()) *
      params.internal_count() * region_len;
  if (params.leaves.size() != want_leaves ||
      params.masks.size() != want_masks) {
    throw std::invalid_argument("tree parameter storage does not match tree "
                                "structure");
  }
}

// Post-order evaluation of the subtree rooted at `node`; records sigma for
// internal nodes and the output of every node.
double tree_eval(const TreeParams& params, int group,
                 std::span<const double> x, int node, double* node_out,
                 double* sigma) {
  const int internal = params.internal_count();
  double value;
  if (node >= internal) {
    const auto v = params.leaf(group, node - internal);
    value = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) value += v[i] * x[i];
  } else {
    const double fl =
        tree_eval(params, group, x, 2 * node + 1, node_out, sigma);
    const double fr =
        tree_eval(params, group, x, 2 * node + 2, node_out, sigma);
    const auto w = params.mask(group, node);
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += w[i] * x[i];
    const double s = sigmoid(z);
    sigma[node] = s;
    value = s * fl + (1.0 - s) * fr;
  }
  node_out[node] = value;
  return value;
}

// Pre-order gradient walk. `path` is delta times the product of gate
// factors from the root down to `node`.
void tree_grad(const TreeParams& params, int group, const double* x,
               const double* node_out, const double* sigma, int node,
               double path, std::span<const std::ptrdiff_t> idx, double* gv,
               double* gw, Tensor& grad_in) {
  const int internal = params.internal_count();
  const int len = params.region_len;
  if (node >= internal) {
    const auto v = params.leaf(group, node - internal);
    double* gleaf = gv + static_cast<std::size_t>(node - internal) * len;
    for (int i = 0; i < len; ++i) {
      gleaf[i] += path * x[i];
      if (idx[i] >= 0) {
        grad_in[static_cast<std::size_t>(idx[i])] += path * v[i];
      }
    }
    return;
  }
  const double s = sigma[node];
  const double fl = node_out[2 * node + 1];
  const double fr = node_out[2 * node + 2];
  const auto w = params.mask(group, node);
  const double gate = path * s * (1.0 - s) * (fl - fr);
  double* gmask = gw + static_cast<std::size_t>(node) * len;
  for (int i = 0; i < len; ++i) {
    gmask[i] += gate * x[i];
    if (idx[i] >= 0) {
      grad_in[static_cast<std::size_t>(idx[i])] += gate * w[i];
    }
  }
  tree_grad(params, group, x, node_out, sigma, 2 * node + 1, path * s, idx, gv,
            gw, grad_in);
  tree_grad(params, group, x, node_out, sigma, 2 * node + 2, path * (1.0 - s),
            idx, gv, gw, grad_in);
}

}  // namespace

std::pair<Tensor, PoolCache> tree_pool_forward(const Tensor& input,
                                               const PoolGeometry& geom,
                                               const TreeParams& params) {
  RegionScanner scan(input.shape(), geom);
  params.granularity.check(input.shape().c, scan.out_h(), scan.out_w());
  check_tree(params, scan.region_len());
  Tensor out(output_shape(scan));
  PoolCache cache = make_cache(PoolOp::Tree, scan);
  const std::size_t regions = scan.region_count();
  const int len = scan.region_len();
  const int nodes = params.node_count();
  cache.region_values.resize(regions * len);
  cache.node_values.resize(regions * nodes);
  cache.sigma.resize(regions * params.internal_count());
  scan_regions(
      input, scan,
      [&](std::size_t r, int n, int c, int oy, int ox,
          std::span<const double> vals, std::span<const std::ptrdiff_t>) {
        const int g = params.granularity.group_index(c, oy, ox);
        double* node_out = cache.node_values.data() + r * nodes;
        double* sigma = cache.sigma.data() + r * params.internal_count();
        out.at(n, c, oy, ox) = tree_eval(params, g, vals, 0, node_out, sigma);
        std::copy(vals.begin(), vals.end(),
                  cache.region_values.begin() + r * len);
      });
  return {std::move(out), std::move(cache)};
}

TreeGrads tree_pool_backward(const Tensor& grad_out, const PoolCache& cache,
                             const TreeParams& params) {
  check_backward(grad_out, cache, PoolOp::Tree);
  params.granularity.check(cache.input_shape.c, cache.out_h, cache.out_w);
  check_tree(params, cache.geom.region_len());
  TreeGrads grads{Tensor(cache.input_shape),
                  std::vector<double>(params.leaves.size(), 0.0),
                  std::vector<double>(params.masks.size(), 0.0)};
  const int len = cache.geom.region_len();
  const int nodes = params.node_count();
  const std::size_t leaf_block =
      static_cast<std::size_t>(params.leaf_count()) * len;
  const std::size_t mask_block =
      static_cast<std::size_t>(params.internal_count()) * len;
  scan_cached_regions(
      cache,
      [&](std::size_t r, int n, int c, int oy, int ox, std::span<const double>,
          std::span<const std::ptrdiff_t> idx) {
        const double delta = grad_out.at(n, c, oy, ox);
        const int g = params.granularity.group_index(c, oy, ox);
        const double* x = cache.region_values.data() + r * len;
        const double* node_out = cache.node_values.data() + r * nodes;
        const double* sigma =
            cache.sigma.data() + r * params.internal_count();
        tree_grad(params, g, x, node_out, sigma, 0, delta, idx,
                  grads.leaves.data() + g * leaf_block,
                  grads.masks.data() + g * mask_block, grads.input);
      });
  return grads;
}

}  // namespace poolgen
