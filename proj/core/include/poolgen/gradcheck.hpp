#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "poolgen/pooling.hpp"
#include "poolgen/tensor.hpp"

namespace poolgen {
namespace gradcheck {

// Central finite differences, (f(x + h e_i) - f(x - h e_i)) / 2h per
// coordinate. Throws if f returns a non-finite value.
Tensor fd_gradient(const std::function<double(const Tensor&)>& f,
                   const Tensor& x, double h);

// |a - b| / max(1e-8, |a| + |b|); the floor keeps near-zero pairs sane.
double rel_err(double a, double b);

// Naive per-region oracles. These re-derive every formula with their own
// loops and share nothing with the optimized forward paths beyond the
// tensor/geometry plumbing, so agreement is meaningful evidence.
Tensor brute_force_avg(const Tensor& input, const PoolGeometry& geom);
Tensor brute_force_max(const Tensor& input, const PoolGeometry& geom);
Tensor brute_force_stochastic(const Tensor& input, const PoolGeometry& geom,
                              Mode mode, std::uint64_t seed);
Tensor brute_force_mixed(const Tensor& input, const PoolGeometry& geom,
                         const MixedParams& params);
Tensor brute_force_gated(const Tensor& input, const PoolGeometry& geom,
                         const GatedParams& params);
Tensor brute_force_tree(const Tensor& input, const PoolGeometry& geom,
                        const TreeParams& params);

// Hard-coded closed-form backward for a 2-level tree
//   f(x) = s * (v1 . x) + (1 - s) * (v2 . x),  s = sigmoid(w3 . x)
// with gradients
//   dE/dv1 = delta * s * x
//   dE/dv2 = delta * (1 - s) * x
//   dE/dw3 = delta * s * (1 - s) * ((v1 - v2) . x) * x
//   dE/dx  = delta * [s (1 - s) ((v1 - v2) . x) w3 + s v1 + (1 - s) v2]
// Must agree bit-for-bit with the recursive tree backward at levels == 2.
TreeGrads tree2_closed_form_backward(const Tensor& grad_out,
                                     const PoolCache& cache,
                                     const TreeParams& params);

enum class CheckOp { Avg, Max, Mixed, Gated, Tree2, Tree3 };

const char* check_op_name(CheckOp op);

struct OperatorSpec {
  CheckOp op = CheckOp::Avg;
  PoolGeometry geom;
  GranularityKind granularity = GranularityKind::PerLayer;
  Shape input_shape{2, 2, 5, 5};
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_coordinate;
  double h = 1e-5;
  int trials = 0;
  int resampled_trials = 0;

  bool pass(double tol = 1e-6) const { return max_rel_err < tol; }
};

// Runs `trials` randomized comparisons of analytic gradients (inputs and
// parameters) against central finite differences of a weighted-sum
// objective. The differencing runs on an independent extended-precision
// forward replica with Richardson extrapolation (evaluations at +-h and
// +-h/2), which keeps truncation and rounding noise orders of magnitude
// below the 1e-6 tolerance even at coordinates whose gradient nearly
// cancels. Trials where a perturbation flips any region argmax are
// discarded and resampled; the pooled function is only piecewise smooth
// there. `grad_scale` != 1 deliberately corrupts the analytic gradients
// and exists so failure detection itself can be tested.
GradCheckReport check_operator(const OperatorSpec& spec, int trials,
                               std::uint64_t seed, double h = 1e-5,
                               double grad_scale = 1.0);

// The full verification matrix: every operator x granularity x geometry
// combination used by the gradcheck command.
std::vector<OperatorSpec> default_check_matrix();

}  // namespace gradcheck
}  // namespace poolgen
