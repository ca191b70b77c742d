#include "poolgen/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>

#if defined(__GNUC__) && defined(__x86_64__)
#include <quadmath.h>
#endif

#include "poolgen/rng.hpp"

namespace poolgen {
namespace gradcheck {

Tensor fd_gradient(const std::function<double(const Tensor&)>& f,
                   const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient requires h > 0");
  Tensor probe = x;
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("fd_gradient: non-finite objective value");
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double rel_err(double a, double b) {
  const double denom = std::abs(a) + std::abs(b);
  return std::abs(a - b) / (denom > 1e-8 ? denom : 1e-8);
}

// ------------------------------------------------------------- oracles
//
// Everything below re-derives window extraction, tie-breaking, the gate
// sigmoid and the tree recursion from the operator definitions; none of the
// optimized forward code is reused.

namespace {

double sigmoid_ref(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct OracleGrid {
  int out_h = 0;
  int out_w = 0;
  int len = 0;
};

OracleGrid oracle_grid(const Shape& s, const PoolGeometry& g) {
  OracleGrid grid;
  grid.out_h = (s.h + 2 * g.padding - g.region_h) / g.stride + 1;
  grid.out_w = (s.w + 2 * g.padding - g.region_w) / g.stride + 1;
  grid.len = g.region_h * g.region_w;
  if (grid.out_h < 1 || grid.out_w < 1) {
    throw std::invalid_argument("oracle: empty pooling output");
  }
  return grid;
}

// Visits regions in (n, c, oy, ox) order; x holds the window values with
// zeros at padded slots.
template <typename Fn>
Tensor oracle_scan(const Tensor& in, const PoolGeometry& g, Fn&& fn) {
  const Shape& s = in.shape();
  const OracleGrid grid = oracle_grid(s, g);
  Tensor out({s.n, s.c, grid.out_h, grid.out_w});
  std::vector<double> x(grid.len);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < grid.out_h; ++oy)
        for (int ox = 0; ox < grid.out_w; ++ox) {
          int slot = 0;
          for (int ky = 0; ky < g.region_h; ++ky)
            for (int kx = 0; kx < g.region_w; ++kx, ++slot) {
              const int y = oy * g.stride - g.padding + ky;
              const int xx = ox * g.stride - g.padding + kx;
              x[slot] = (y < 0 || y >= s.h || xx < 0 || xx >= s.w)
                            ? 0.0
                            : in.at(n, c, y, xx);
            }
          out.at(n, c, oy, ox) = fn(c, oy, ox, x);
        }
  return out;
}

double oracle_max(const std::vector<double>& x) {
  double m = x[0];
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > m) m = x[i];
  return m;
}

double oracle_avg(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

int oracle_group(const Granularity& g, int c, int oy, int ox) {
  if (g.kind == GranularityKind::PerLayer) return 0;
  return (c * g.out_rows + oy) * g.out_cols + ox;
}

}  // namespace

Tensor brute_force_avg(const Tensor& input, const PoolGeometry& geom) {
  return oracle_scan(input, geom, [](int, int, int, const std::vector<double>& x) {
    return oracle_avg(x);
  });
}

Tensor brute_force_max(const Tensor& input, const PoolGeometry& geom) {
  return oracle_scan(input, geom, [](int, int, int, const std::vector<double>& x) {
    return oracle_max(x);
  });
}

Tensor brute_force_stochastic(const Tensor& input, const PoolGeometry& geom,
                              Mode mode, std::uint64_t seed) {
  Rng rng(seed);
  return oracle_scan(
      input, geom, [&](int, int, int, const std::vector<double>& x) {
        for (double v : x) {
          if (v < 0.0) {
            throw std::invalid_argument(
                "stochastic pooling requires non-negative activations");
          }
        }
        double total = 0.0;
        for (double v : x) total += v;
        if (mode == Mode::Train) {
          const double u = rng.uniform();
          const int len = static_cast<int>(x.size());
          int pick = len - 1;
          if (total > 0.0) {
            const double cut = u * total;
            double acc = 0.0;
            for (int i = 0; i < len; ++i) {
              acc += x[i];
              if (acc > cut) {
                pick = i;
                break;
              }
            }
          } else {
            pick = static_cast<int>(u * len);
            if (pick >= len) pick = len - 1;
          }
          return x[pick];
        }
        if (total <= 0.0) return 0.0;
        double sq = 0.0;
        for (double v : x) sq += v * v;
        return sq / total;
      });
}

Tensor brute_force_mixed(const Tensor& input, const PoolGeometry& geom,
                         const MixedParams& params) {
  return oracle_scan(input, geom,
                     [&](int c, int oy, int ox, const std::vector<double>& x) {
                       const double a =
                           params.a[oracle_group(params.granularity, c, oy, ox)];
                       return a * oracle_max(x) + (1.0 - a) * oracle_avg(x);
                     });
}

Tensor brute_force_gated(const Tensor& input, const PoolGeometry& geom,
                         const GatedParams& params) {
  return oracle_scan(
      input, geom, [&](int c, int oy, int ox, const std::vector<double>& x) {
        const int g = oracle_group(params.granularity, c, oy, ox);
        double z = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          z += params.omega[static_cast<std::size_t>(g) * x.size() + i] * x[i];
        }
        const double s = sigmoid_ref(z);
        return s * oracle_max(x) + (1.0 - s) * oracle_avg(x);
      });
}

namespace {

double oracle_tree_node(const TreeParams& p, int group,
                        const std::vector<double>& x, int node) {
  const int internal = p.internal_count();
  const int len = static_cast<int>(x.size());
  if (node >= internal) {
    const int leaf = node - internal;
    double s = 0.0;
    for (int i = 0; i < len; ++i) {
      s += p.leaves[(static_cast<std::size_t>(group) * p.leaf_count() + leaf) *
                        len +
                    i] *
           x[i];
    }
    return s;
  }
  double z = 0.0;
  for (int i = 0; i < len; ++i) {
    z += p.masks[(static_cast<std::size_t>(group) * p.internal_count() + node) *
                     len +
                 i] *
         x[i];
  }
  const double s = sigmoid_ref(z);
  return s * oracle_tree_node(p, group, x, 2 * node + 1) +
         (1.0 - s) * oracle_tree_node(p, group, x, 2 * node + 2);
}

}  // namespace

Tensor brute_force_tree(const Tensor& input, const PoolGeometry& geom,
                        const TreeParams& params) {
  return oracle_scan(input, geom,
                     [&](int c, int oy, int ox, const std::vector<double>& x) {
                       const int g =
                           oracle_group(params.granularity, c, oy, ox);
                       return oracle_tree_node(params, g, x, 0);
                     });
}

TreeGrads tree2_closed_form_backward(const Tensor& grad_out,
                                     const PoolCache& cache,
                                     const TreeParams& params) {
  if (params.levels != 2) {
    throw std::invalid_argument("closed-form backward is for 2-level trees");
  }
  if (cache.op != PoolOp::Tree) {
    throw std::invalid_argument("cache does not hold tree pooling state");
  }
  const Shape& s = cache.input_shape;
  const PoolGeometry& g = cache.geom;
  const int len = g.region_len();
  TreeGrads grads{Tensor(s), std::vector<double>(params.leaves.size(), 0.0),
                  std::vector<double>(params.masks.size(), 0.0)};
  std::vector<std::ptrdiff_t> idx(len);
  std::size_t r = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < cache.out_h; ++oy)
        for (int ox = 0; ox < cache.out_w; ++ox, ++r) {
          int slot = 0;
          for (int ky = 0; ky < g.region_h; ++ky)
            for (int kx = 0; kx < g.region_w; ++kx, ++slot) {
              const int y = oy * g.stride - g.padding + ky;
              const int xx = ox * g.stride - g.padding + kx;
              idx[slot] = (y < 0 || y >= s.h || xx < 0 || xx >= s.w)
                              ? -1
                              : static_cast<std::ptrdiff_t>(
                                    grads.input.index(n, c, y, xx));
            }
          const double delta = grad_out.at(n, c, oy, ox);
          const int group = oracle_group(params.granularity, c, oy, ox);
          const double* x = cache.region_values.data() +
                            r * static_cast<std::size_t>(len);
          const double* v1 =
              params.leaves.data() +
              (static_cast<std::size_t>(group) * 2 + 0) * len;
          const double* v2 =
              params.leaves.data() +
              (static_cast<std::size_t>(group) * 2 + 1) * len;
          const double* w3 =
              params.masks.data() + static_cast<std::size_t>(group) * len;
          double f1 = 0.0, f2 = 0.0, z = 0.0;
          for (int i = 0; i < len; ++i) {
            f1 += v1[i] * x[i];
            f2 += v2[i] * x[i];
            z += w3[i] * x[i];
          }
          const double sg = sigmoid_ref(z);
          const double gate = delta * sg * (1.0 - sg) * (f1 - f2);
          double* gw3 =
              grads.masks.data() + static_cast<std::size_t>(group) * len;
          for (int i = 0; i < len; ++i) {
            gw3[i] += gate * x[i];
            if (idx[i] >= 0) grads.input[idx[i]] += gate * w3[i];
          }
          const double s1 = delta * sg;
          double* gv1 = grads.leaves.data() +
                        (static_cast<std::size_t>(group) * 2 + 0) * len;
          for (int i = 0; i < len; ++i) {
            gv1[i] += s1 * x[i];
            if (idx[i] >= 0) grads.input[idx[i]] += s1 * v1[i];
          }
          const double s2 = delta * (1.0 - sg);
          double* gv2 = grads.leaves.data() +
                        (static_cast<std::size_t>(group) * 2 + 1) * len;
          for (int i = 0; i < len; ++i) {
            gv2[i] += s2 * x[i];
            if (idx[i] >= 0) grads.input[idx[i]] += s2 * v2[i];
          }
        }
  return grads;
}

// ------------------------------------------------------- check_operator

const char* check_op_name(CheckOp op) {
  switch (op) {
    case CheckOp::Avg: return "avg";
    case CheckOp::Max: return "max";
    case CheckOp::Mixed: return "mixed";
    case CheckOp::Gated: return "gated";
    case CheckOp::Tree2: return "tree2";
    case CheckOp::Tree3: return "tree3";
  }
  return "?";
}


namespace {

struct CheckContext {
  OperatorSpec spec;
  Granularity gran;
  MixedParams mixed;
  GatedParams gated;
  TreeParams tree;

  std::pair<Tensor, PoolCache> forward(const Tensor& x) const {
    switch (spec.op) {
      case CheckOp::Avg: return avg_pool_forward(x, spec.geom);
      case CheckOp::Max: return max_pool_forward(x, spec.geom);
      case CheckOp::Mixed: return mixed_pool_forward(x, spec.geom, mixed);
      case CheckOp::Gated: return gated_pool_forward(x, spec.geom, gated);
      case CheckOp::Tree2:
      case CheckOp::Tree3: return tree_pool_forward(x, spec.geom, tree);
    }
    throw std::logic_error("unreachable");
  }
};

CheckContext make_context(const OperatorSpec& spec, std::uint64_t seed) {
  CheckContext ctx;
  ctx.spec = spec;
  const Shape& s = spec.input_shape;
  ctx.gran = spec.granularity == GranularityKind::PerLayer
                 ? Granularity::per_layer()
                 : Granularity::per_layer_channel_region(
                       s.c, spec.geom.out_h(s.h), spec.geom.out_w(s.w));
  const int len = spec.geom.region_len();
  Rng rng(seed);
  switch (spec.op) {
    case CheckOp::Mixed:
      ctx.mixed = MixedParams::init(ctx.gran, 0.5);
      // Interior values so +-h perturbations stay inside [0, 1].
      for (double& a : ctx.mixed.a) a = 0.2 + 0.6 * rng.uniform();
      break;
    case CheckOp::Gated:
      ctx.gated = GatedParams::init(ctx.gran, len, 0.5, rng.next_u64());
      break;
    case CheckOp::Tree2:
      ctx.tree = TreeParams::init(2, ctx.gran, len, 0.5, rng.next_u64());
      break;
    case CheckOp::Tree3:
      ctx.tree = TreeParams::init(3, ctx.gran, len, 0.5, rng.next_u64());
      break;
    default:
      break;
  }
  return ctx;
}

Tensor random_tensor(const Shape& s, std::uint64_t seed) {
  return Tensor::gaussian(s, 0.0, 1.0, seed);
}

// Upstream error signal with magnitudes bounded away from zero so the
// relative-error denominators stay meaningful.
Tensor weight_tensor(const Shape& s, std::uint64_t seed) {
  Tensor w(s);
  Rng rng(seed);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double mag = 0.5 + rng.uniform();
    w[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return w;
}

// Extended-precision replica of the forward paths, used only to evaluate
// the finite-difference objective. Re-derives every formula independently.
// Runs in long double by default; coordinates whose gradient nearly
// cancels (where the long-double rounding floor meets the relative-error
// denominator floor) are re-measured in quadruple precision, so the
// comparison stays orders of magnitude below the 1e-6 tolerance for any
// random draw.

template <typename R>
R exp_of(R z);
template <>
long double exp_of(long double z) {
  return std::exp(z);
}
#if defined(__GNUC__) && defined(__x86_64__)
template <>
__float128 exp_of(__float128 z) {
  return expq(z);
}
#endif

enum class TargetKind { Input, MixedA, Omega, Leaves, Masks };

template <typename R>
struct BigOracle {
  CheckOp op = CheckOp::Avg;
  PoolGeometry geom;
  Granularity gran;
  int levels = 2;
  Shape in_shape;
  std::vector<R> input;
  std::vector<R> a;       // mixed proportions
  std::vector<R> omega;   // gated masks
  std::vector<R> leaves;  // tree filters
  std::vector<R> masks;   // tree gates
  std::vector<R> w;       // objective weights, one per region

  std::vector<R>& coords(TargetKind k) {
    switch (k) {
      case TargetKind::Input: return input;
      case TargetKind::MixedA: return a;
      case TargetKind::Omega: return omega;
      case TargetKind::Leaves: return leaves;
      case TargetKind::Masks: return masks;
    }
    throw std::logic_error("unreachable");
  }

  static R sig(R z) {
    if (z >= R(0)) {
      const R e = exp_of<R>(-z);
      return R(1) / (R(1) + e);
    }
    const R e = exp_of<R>(z);
    return e / (R(1) + e);
  }

  R tree_node(int group, const std::vector<R>& x, int node,
              int leaf_count) const {
    const int internal = leaf_count - 1;
    const int len = geom.region_len();
    if (node >= internal) {
      const std::size_t off =
          (static_cast<std::size_t>(group) * leaf_count + (node - internal)) *
          len;
      R s = R(0);
      for (int i = 0; i < len; ++i) s += leaves[off + i] * x[i];
      return s;
    }
    const std::size_t off =
        (static_cast<std::size_t>(group) * internal + node) * len;
    R z = R(0);
    for (int i = 0; i < len; ++i) z += masks[off + i] * x[i];
    const R s = sig(z);
    return s * tree_node(group, x, 2 * node + 1, leaf_count) +
           (R(1) - s) * tree_node(group, x, 2 * node + 2, leaf_count);
  }

  // Weighted-sum objective; argmax_out (when non-null) records the region
  // argmax indices so callers can reject trials crossing a max boundary.
  R eval(std::vector<std::int32_t>* argmax_out) const {
    const int oh =
        (in_shape.h + 2 * geom.padding - geom.region_h) / geom.stride + 1;
    const int ow =
        (in_shape.w + 2 * geom.padding - geom.region_w) / geom.stride + 1;
    const int len = geom.region_len();
    std::vector<R> x(len);
    if (argmax_out) argmax_out->clear();
    R total = R(0);
    std::size_t r = 0;
    for (int n = 0; n < in_shape.n; ++n)
      for (int c = 0; c < in_shape.c; ++c)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox, ++r) {
            int slot = 0;
            for (int ky = 0; ky < geom.region_h; ++ky)
              for (int kx = 0; kx < geom.region_w; ++kx, ++slot) {
                const int y = oy * geom.stride - geom.padding + ky;
                const int xx = ox * geom.stride - geom.padding + kx;
                x[slot] =
                    (y < 0 || y >= in_shape.h || xx < 0 || xx >= in_shape.w)
                        ? R(0)
                        : input[((static_cast<std::size_t>(n) * in_shape.c +
                                  c) *
                                     in_shape.h +
                                 y) *
                                    in_shape.w +
                                xx];
              }
            int am = 0;
            for (int i = 1; i < len; ++i)
              if (x[i] > x[am]) am = i;
            R avg = R(0);
            for (int i = 0; i < len; ++i) avg += x[i];
            avg /= len;
            const int g = gran.kind == GranularityKind::PerLayer
                              ? 0
                              : (c * gran.out_rows + oy) * gran.out_cols + ox;
            R value = R(0);
            switch (op) {
              case CheckOp::Avg:
                value = avg;
                break;
              case CheckOp::Max:
                value = x[am];
                if (argmax_out) argmax_out->push_back(am);
                break;
              case CheckOp::Mixed:
                value = a[g] * x[am] + (R(1) - a[g]) * avg;
                if (argmax_out) argmax_out->push_back(am);
                break;
              case CheckOp::Gated: {
                R z = R(0);
                for (int i = 0; i < len; ++i) {
                  z += omega[static_cast<std::size_t>(g) * len + i] * x[i];
                }
                const R s = sig(z);
                value = s * x[am] + (R(1) - s) * avg;
                if (argmax_out) argmax_out->push_back(am);
                break;
              }
              case CheckOp::Tree2:
              case CheckOp::Tree3:
                value = tree_node(g, x, 0, 1 << (levels - 1));
                break;
            }
            total += w[r] * value;
          }
    return total;
  }
};

template <typename R>
std::vector<R> widen(std::span<const double> v) {
  return std::vector<R>(v.begin(), v.end());
}

template <typename R>
BigOracle<R> make_oracle(const CheckContext& ctx, const Tensor& input,
                         const Tensor& w) {
  BigOracle<R> o;
  o.op = ctx.spec.op;
  o.geom = ctx.spec.geom;
  o.gran = ctx.gran;
  o.levels = ctx.spec.op == CheckOp::Tree3 ? 3 : 2;
  o.in_shape = input.shape();
  o.input = widen<R>(input.data());
  o.a = widen<R>(ctx.mixed.a);
  o.omega = widen<R>(ctx.gated.omega);
  o.leaves = widen<R>(ctx.tree.leaves);
  o.masks = widen<R>(ctx.tree.masks);
  o.w = widen<R>(w.data());
  return o;
}

// Richardson-extrapolated central difference of the oracle objective along
// one coordinate: O(h^4) truncation. Reports false when a region argmax
// changed across any of the four evaluations (piecewise boundary).
template <typename R>
bool oracle_derivative(BigOracle<R>& oracle, TargetKind target, std::size_t i,
                       double h, bool track_argmax, double* out) {
  std::vector<R>& coords = oracle.coords(target);
  const R orig = coords[i];
  const R step = R(h);
  std::vector<std::int32_t> am_ref, am;
  std::vector<std::int32_t>* am_ref_ptr = track_argmax ? &am_ref : nullptr;
  std::vector<std::int32_t>* am_ptr = track_argmax ? &am : nullptr;

  coords[i] = orig + step;
  const R fp = oracle.eval(am_ref_ptr);
  coords[i] = orig - step;
  const R fm = oracle.eval(am_ptr);
  if (track_argmax && am != am_ref) {
    coords[i] = orig;
    return false;
  }
  coords[i] = orig + step / R(2);
  const R fp2 = oracle.eval(am_ptr);
  if (track_argmax && am != am_ref) {
    coords[i] = orig;
    return false;
  }
  coords[i] = orig - step / R(2);
  const R fm2 = oracle.eval(am_ptr);
  coords[i] = orig;
  if (track_argmax && am != am_ref) return false;

  const R d1 = (fp - fm) / (R(2) * step);
  const R d2 = (fp2 - fm2) / step;
  *out = static_cast<double>((R(4) * d2 - d1) / R(3));
  return true;
}

void note_err(GradCheckReport& rep, double err, const char* tensor,
              std::size_t coord, int trial) {
  if (err > rep.max_rel_err) {
    rep.max_rel_err = err;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "trial %d %s[%zu]", trial, tensor, coord);
    rep.worst_coordinate = buf;
  }
}

struct ParamTarget {
  const char* name;
  TargetKind kind;
  const std::vector<double>* analytic;  // backward-pass gradient
};

}  // namespace

GradCheckReport check_operator(const OperatorSpec& spec, int trials,
                               std::uint64_t seed, double h,
                               double grad_scale) {
  if (trials < 1) {
    throw std::invalid_argument("check_operator needs trials >= 1");
  }
  GradCheckReport rep;
  rep.h = h;
  const bool has_argmax = spec.op == CheckOp::Max ||
                          spec.op == CheckOp::Mixed ||
                          spec.op == CheckOp::Gated;
  int done = 0;
  std::uint64_t attempt = 0;
  const std::uint64_t attempt_budget =
      static_cast<std::uint64_t>(trials) * 50 + 100;
  while (done < trials && attempt < attempt_budget) {
    const std::uint64_t tseed = mix_seed(seed, attempt);
    ++attempt;
    CheckContext ctx = make_context(spec, mix_seed(tseed, 1));
    const Tensor input = random_tensor(spec.input_shape, mix_seed(tseed, 2));

    auto [out, cache] = ctx.forward(input);
    const Tensor w = weight_tensor(out.shape(), mix_seed(tseed, 3));

    // Analytic gradients with upstream delta = w.
    Tensor grad_input;
    std::vector<ParamTarget> targets;
    MixedGrads mg;
    GatedGrads gg;
    TreeGrads tg;
    switch (spec.op) {
      case CheckOp::Avg:
        grad_input = avg_pool_backward(w, cache);
        break;
      case CheckOp::Max:
        grad_input = max_pool_backward(w, cache);
        break;
      case CheckOp::Mixed:
        mg = mixed_pool_backward(w, cache, ctx.mixed);
        grad_input = std::move(mg.input);
        targets.push_back({"a", TargetKind::MixedA, &mg.a});
        break;
      case CheckOp::Gated:
        gg = gated_pool_backward(w, cache, ctx.gated);
        grad_input = std::move(gg.input);
        targets.push_back({"omega", TargetKind::Omega, &gg.omega});
        break;
      case CheckOp::Tree2:
      case CheckOp::Tree3:
        tg = tree_pool_backward(w, cache, ctx.tree);
        grad_input = std::move(tg.input);
        targets.push_back({"leaf", TargetKind::Leaves, &tg.leaves});
        targets.push_back({"mask", TargetKind::Masks, &tg.masks});
        break;
    }

    BigOracle<long double> oracle = make_oracle<long double>(ctx, input, w);
#if defined(__GNUC__) && defined(__x86_64__)
    std::optional<BigOracle<__float128>> quad;
#endif
    // Measures one coordinate; when the result sits near the tolerance the
    // measurement is repeated in quadruple precision (near-cancelled
    // gradients otherwise meet the long-double rounding floor).
    auto measure = [&](TargetKind kind, std::size_t i, double analytic,
                       bool guard) -> std::optional<double> {
      double fd = 0.0;
      if (!oracle_derivative(oracle, kind, i, h, guard, &fd)) {
        return std::nullopt;
      }
      double err = rel_err(analytic, fd);
#if defined(__GNUC__) && defined(__x86_64__)
      if (err >= 1e-7) {
        if (!quad) quad = make_oracle<__float128>(ctx, input, w);
        double qfd = 0.0;
        if (!oracle_derivative(*quad, kind, i, h, guard, &qfd)) {
          return std::nullopt;
        }
        const double qerr = rel_err(analytic, qfd);
        if (qerr < err) err = qerr;
      }
#endif
      return err;
    };

    GradCheckReport local = rep;
    bool switched = false;
    for (std::size_t i = 0; i < grad_input.size() && !switched; ++i) {
      const auto err =
          measure(TargetKind::Input, i, grad_input[i] * grad_scale,
                  has_argmax);
      if (!err) {
        switched = true;
        break;
      }
      note_err(local, *err, "input", i, done);
    }
    if (switched) {
      ++rep.resampled_trials;
      continue;
    }
    for (const ParamTarget& t : targets) {
      for (std::size_t j = 0; j < t.analytic->size(); ++j) {
        // Parameter perturbations cannot flip a region argmax.
        const auto err =
            measure(t.kind, j, (*t.analytic)[j] * grad_scale, false);
        note_err(local, *err, t.name, j, done);
      }
    }

    rep = local;
    ++done;
  }
  rep.trials = done;
  return rep;
}

std::vector<OperatorSpec> default_check_matrix() {
  const CheckOp ops[] = {CheckOp::Avg,   CheckOp::Max,   CheckOp::Mixed,
                         CheckOp::Gated, CheckOp::Tree2, CheckOp::Tree3};
  const GranularityKind grans[] = {GranularityKind::PerLayer,
                                   GranularityKind::PerLayerChannelRegion};
  const PoolGeometry geoms[] = {
      {2, 2, 2, 0},
      {3, 3, 2, 0},
      {3, 3, 1, 0},
  };
  std::vector<OperatorSpec> specs;
  for (CheckOp op : ops)
    for (GranularityKind gran : grans)
      for (const PoolGeometry& geom : geoms)
        specs.push_back({op, geom, gran, Shape{2, 2, 5, 5}});
  return specs;
}

}  // namespace gradcheck
}  // namespace poolgen
