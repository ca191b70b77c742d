#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "poolgen/pooling.hpp"
#include "poolgen/tensor.hpp"

namespace poolgen {

// Direct-loop cross-correlation, NCHW. Kernels are (out_c, in_c, k_h, k_w).
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels,
                      std::span<const double> bias, int stride, int padding);

struct ConvGrads {
  Tensor input;
  Tensor kernels;
  std::vector<double> bias;
};
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input,
                          const Tensor& kernels, int stride, int padding);

Tensor relu_forward(const Tensor& input);
// Gradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

// Inverted dropout: train mode zeroes each element with probability `rate`
// and scales survivors by 1/(1-rate); test mode is the identity. The mask
// holds the per-element scale factor and is reused by backward.
struct DropoutResult {
  Tensor output;
  std::vector<double> mask;
};
DropoutResult dropout_forward(const Tensor& input, double rate, Mode mode,
                              std::uint64_t seed);
Tensor dropout_backward(const Tensor& grad_out,
                        const std::vector<double>& mask);

// Softmax + cross entropy over logits of shape (n, classes, 1, 1).
// Loss is the batch mean; grad_logits = (softmax - onehot) / n.
struct XentResult {
  double loss = 0.0;
  Tensor grad_logits;
};
XentResult softmax_xent(const Tensor& logits, std::span<const int> labels);

// Dense layer on flattened activations; weights are (units, in_dim).
Tensor dense_forward(const Tensor& input, const Matrix& weights,
                     std::span<const double> bias);
struct DenseGrads {
  Tensor input;
  Matrix weights;
  std::vector<double> bias;
};
DenseGrads dense_backward(const Tensor& grad_out, const Tensor& input,
                          const Matrix& weights);

}  // namespace poolgen
