#include "poolgen/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "poolgen/rng.hpp"

namespace poolgen {

namespace {

void check_conv_args(const Shape& in, const Shape& k, std::size_t bias_len,
                     int stride, int padding) {
  if (k.c != in.c) {
    throw std::invalid_argument("conv kernels expect " + std::to_string(k.c) +
                                " input channels, got " +
                                std::to_string(in.c));
  }
  if (bias_len != static_cast<std::size_t>(k.n)) {
    throw std::invalid_argument("conv bias length does not match kernel count");
  }
  if (stride < 1 || padding < 0) {
    throw std::invalid_argument("conv stride must be positive, padding "
                                "non-negative");
  }
  if ((in.h + 2 * padding - k.h) / stride + 1 < 1 ||
      (in.w + 2 * padding - k.w) / stride + 1 < 1 ||
      in.h + 2 * padding < k.h || in.w + 2 * padding < k.w) {
    throw std::invalid_argument("conv kernel does not fit padded input");
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels,
                      std::span<const double> bias, int stride, int padding) {
  const Shape& in = input.shape();
  const Shape& k = kernels.shape();
  check_conv_args(in, k, bias.size(), stride, padding);
  const int out_h = (in.h + 2 * padding - k.h) / stride + 1;
  const int out_w = (in.w + 2 * padding - k.w) / stride + 1;
  Tensor out({in.n, k.n, out_h, out_w});
  for (int n = 0; n < in.n; ++n)
    for (int oc = 0; oc < k.n; ++oc)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          double acc = bias[oc];
          for (int ic = 0; ic < in.c; ++ic)
            for (int ky = 0; ky < k.h; ++ky) {
              const int y = oy * stride - padding + ky;
              if (y < 0 || y >= in.h) continue;
              for (int kx = 0; kx < k.w; ++kx) {
                const int x = ox * stride - padding + kx;
                if (x < 0 || x >= in.w) continue;
                acc += input.at(n, ic, y, x) * kernels.at(oc, ic, ky, kx);
              }
            }
          out.at(n, oc, oy, ox) = acc;
        }
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input,
                          const Tensor& kernels, int stride, int padding) {
  const Shape& in = input.shape();
  const Shape& k = kernels.shape();
  const int out_h = (in.h + 2 * padding - k.h) / stride + 1;
  const int out_w = (in.w + 2 * padding - k.w) / stride + 1;
  if (!(grad_out.shape() == Shape{in.n, k.n, out_h, out_w})) {
    throw std::invalid_argument("conv grad_out shape mismatch");
  }
  ConvGrads g{Tensor(in), Tensor(k), std::vector<double>(k.n, 0.0)};
  for (int n = 0; n < in.n; ++n)
    for (int oc = 0; oc < k.n; ++oc)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const double delta = grad_out.at(n, oc, oy, ox);
          g.bias[oc] += delta;
          if (delta == 0.0) continue;
          for (int ic = 0; ic < in.c; ++ic)
            for (int ky = 0; ky < k.h; ++ky) {
              const int y = oy * stride - padding + ky;
              if (y < 0 || y >= in.h) continue;
              for (int kx = 0; kx < k.w; ++kx) {
                const int x = ox * stride - padding + kx;
                if (x < 0 || x >= in.w) continue;
                g.kernels.at(oc, ic, ky, kx) += delta * input.at(n, ic, y, x);
                g.input.at(n, ic, y, x) += delta * kernels.at(oc, ic, ky, kx);
              }
            }
        }
  return g;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0.0 ? input[i] : 0.0;
  }
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  if (!(grad_out.shape() == input.shape())) {
    throw std::invalid_argument("relu grad shape mismatch");
  }
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    g[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  }
  return g;
}

DropoutResult dropout_forward(const Tensor& input, double rate, Mode mode,
                              std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  }
  DropoutResult res{input, {}};
  if (mode == Mode::Test || rate == 0.0) return res;
  const double keep_scale = 1.0 / (1.0 - rate);
  res.mask.assign(input.size(), 0.0);
  Rng rng(seed);
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (rng.uniform() >= rate) {
      res.mask[i] = keep_scale;
      res.output[i] = input[i] * keep_scale;
    } else {
      res.output[i] = 0.0;
    }
  }
  return res;
}

Tensor dropout_backward(const Tensor& grad_out,
                        const std::vector<double>& mask) {
  if (mask.empty()) return grad_out;  // identity pass (test mode or rate 0)
  if (mask.size() != grad_out.size()) {
    throw std::invalid_argument("dropout mask size mismatch");
  }
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    g[i] = grad_out[i] * mask[i];
  }
  return g;
}

XentResult softmax_xent(const Tensor& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.h != 1 || s.w != 1) {
    throw std::invalid_argument("softmax expects logits of shape (n,k,1,1)");
  }
  if (labels.size() != static_cast<std::size_t>(s.n)) {
    throw std::invalid_argument("label count does not match batch size");
  }
  XentResult res;
  res.grad_logits = Tensor(s);
  const int classes = s.c;
  double loss = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const int label = labels[n];
    if (label < 0 || label >= classes) {
      throw std::invalid_argument("label " + std::to_string(label) +
                                  " out of range for " +
                                  std::to_string(classes) + " classes");
    }
    double mx = logits.at(n, 0, 0, 0);
    for (int c = 1; c < classes; ++c) mx = std::max(mx, logits.at(n, c, 0, 0));
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(logits.at(n, c, 0, 0) - mx);
    const double log_sum = std::log(sum);
    loss += log_sum - (logits.at(n, label, 0, 0) - mx);
    const double inv_n = 1.0 / s.n;
    for (int c = 0; c < classes; ++c) {
      const double p = std::exp(logits.at(n, c, 0, 0) - mx) / sum;
      res.grad_logits.at(n, c, 0, 0) = (p - (c == label ? 1.0 : 0.0)) * inv_n;
    }
  }
  res.loss = loss / s.n;
  return res;
}

Tensor dense_forward(const Tensor& input, const Matrix& weights,
                     std::span<const double> bias) {
  const Shape& s = input.shape();
  const int in_dim = s.c * s.h * s.w;
  if (weights.cols != in_dim) {
    throw std::invalid_argument("dense weights expect input dim " +
                                std::to_string(weights.cols) + ", got " +
                                std::to_string(in_dim));
  }
  if (bias.size() != static_cast<std::size_t>(weights.rows)) {
    throw std::invalid_argument("dense bias length mismatch");
  }
  const MatView x{input.data().data(), s.n, in_dim};
  const Matrix wt = transpose(MatView::of(weights));
  Matrix y = matmul(x, MatView::of(wt));  // (n, units)
  Tensor out({s.n, weights.rows, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int u = 0; u < weights.rows; ++u)
      out.at(n, u, 0, 0) = y.at(n, u) + bias[u];
  return out;
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& input,
                          const Matrix& weights) {
  const Shape& s = input.shape();
  const int in_dim = s.c * s.h * s.w;
  const int units = weights.rows;
  if (!(grad_out.shape() == Shape{s.n, units, 1, 1})) {
    throw std::invalid_argument("dense grad_out shape mismatch");
  }
  DenseGrads g{Tensor(s), Matrix(units, in_dim),
               std::vector<double>(units, 0.0)};
  const MatView delta{grad_out.data().data(), s.n, units};
  const MatView x{input.data().data(), s.n, in_dim};
  // grad_w = delta^T x, grad_x = delta w
  const Matrix dt = transpose(delta);
  g.weights = matmul(MatView::of(dt), x);
  Matrix gx = matmul(delta, MatView::of(weights));
  std::copy(gx.data.begin(), gx.data.end(), g.input.data().begin());
  for (int n = 0; n < s.n; ++n)
    for (int u = 0; u < units; ++u) g.bias[u] += delta.at(n, u);
  return g;
}

}  // namespace poolgen
