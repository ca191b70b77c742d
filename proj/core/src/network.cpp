#include "poolgen/network.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "poolgen/rng.hpp"

namespace poolgen {

const char* pool_variant_name(PoolVariant v) {
  switch (v) {
    case PoolVariant::Avg: return "avg";
    case PoolVariant::Max: return "max";
    case PoolVariant::Stochastic: return "stochastic";
    case PoolVariant::Mix5050: return "mix5050";
    case PoolVariant::Mixed: return "mixed";
    case PoolVariant::Gated: return "gated";
    case PoolVariant::Tree2: return "tree2";
    case PoolVariant::Tree3: return "tree3";
  }
  return "?";
}

// ------------------------------------------------------------------- conv

ConvLayer::ConvLayer(std::string name, int in_c, const LayerSpec& spec,
                     std::uint64_t seed)
    : name_(std::move(name)), stride_(spec.conv_stride),
      padding_(spec.conv_pad) {
  const Shape kshape{spec.conv_out, in_c, spec.conv_k, spec.conv_k};
  const double fan_in = static_cast<double>(in_c) * spec.conv_k * spec.conv_k;
  kernels_ = Tensor::gaussian(kshape, 0.0, std::sqrt(2.0 / fan_in), seed);
  bias_.assign(spec.conv_out, 0.0);
  grad_kernels_ = Tensor(kshape);
  grad_bias_.assign(spec.conv_out, 0.0);
}

Shape ConvLayer::output_shape(const Shape& in) const {
  const Shape& k = kernels_.shape();
  return {in.n, k.n, (in.h + 2 * padding_ - k.h) / stride_ + 1,
          (in.w + 2 * padding_ - k.w) / stride_ + 1};
}

Tensor ConvLayer::forward(const Tensor& in, const LayerCtx&) {
  cached_input_ = in;
  return conv2d_forward(in, kernels_, bias_, stride_, padding_);
}

Tensor ConvLayer::infer(const Tensor& in, const LayerCtx&) const {
  return conv2d_forward(in, kernels_, bias_, stride_, padding_);
}

Tensor ConvLayer::backward(const Tensor& grad_out) {
  ConvGrads g =
      conv2d_backward(grad_out, cached_input_, kernels_, stride_, padding_);
  for (std::size_t i = 0; i < grad_kernels_.size(); ++i) {
    grad_kernels_[i] += g.kernels[i];
  }
  for (std::size_t i = 0; i < grad_bias_.size(); ++i) {
    grad_bias_[i] += g.bias[i];
  }
  return g.input;
}

void ConvLayer::collect_params(std::vector<ParamSlot>& out) {
  out.push_back({name_ + ".weight", kernels_.data(), grad_kernels_.data(),
                 true, false});
  out.push_back({name_ + ".bias", bias_, grad_bias_, false, false});
}

void ConvLayer::zero_grads() {
  std::fill(grad_kernels_.data().begin(), grad_kernels_.data().end(), 0.0);
  std::fill(grad_bias_.begin(), grad_bias_.end(), 0.0);
}

// ------------------------------------------------------------------- relu

Tensor ReluLayer::forward(const Tensor& in, const LayerCtx&) {
  cached_input_ = in;
  return relu_forward(in);
}

Tensor ReluLayer::infer(const Tensor& in, const LayerCtx&) const {
  return relu_forward(in);
}

Tensor ReluLayer::backward(const Tensor& grad_out) {
  return relu_backward(grad_out, cached_input_);
}

// ---------------------------------------------------------------- dropout

Tensor DropoutLayer::forward(const Tensor& in, const LayerCtx& ctx) {
  DropoutResult res = dropout_forward(in, rate_, ctx.mode, ctx.rng_seed);
  mask_ = std::move(res.mask);
  return std::move(res.output);
}

Tensor DropoutLayer::infer(const Tensor& in, const LayerCtx& ctx) const {
  return dropout_forward(in, rate_, ctx.mode, ctx.rng_seed).output;
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
  return dropout_backward(grad_out, mask_);
}

// ------------------------------------------------------------------ dense

DenseLayer::DenseLayer(std::string name, const Shape& in, int units,
                       std::uint64_t seed)
    : name_(std::move(name)) {
  const int in_dim = in.c * in.h * in.w;
  if (units < 1) throw std::invalid_argument("dense layer needs units >= 1");
  const Tensor init = Tensor::gaussian({units, in_dim, 1, 1}, 0.0,
                                       std::sqrt(2.0 / in_dim), seed);
  weights_ = Matrix(units, in_dim);
  std::copy(init.data().begin(), init.data().end(), weights_.data.begin());
  bias_.assign(units, 0.0);
  grad_weights_ = Matrix(units, in_dim);
  grad_bias_.assign(units, 0.0);
}

Shape DenseLayer::output_shape(const Shape& in) const {
  if (in.c * in.h * in.w != weights_.cols) {
    throw std::invalid_argument("dense input dim mismatch for " + name_);
  }
  return {in.n, weights_.rows, 1, 1};
}

Tensor DenseLayer::forward(const Tensor& in, const LayerCtx&) {
  cached_input_ = in;
  return dense_forward(in, weights_, bias_);
}

Tensor DenseLayer::infer(const Tensor& in, const LayerCtx&) const {
  return dense_forward(in, weights_, bias_);
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
  DenseGrads g = dense_backward(grad_out, cached_input_, weights_);
  for (std::size_t i = 0; i < grad_weights_.data.size(); ++i) {
    grad_weights_.data[i] += g.weights.data[i];
  }
  for (std::size_t i = 0; i < grad_bias_.size(); ++i) {
    grad_bias_[i] += g.bias[i];
  }
  return g.input;
}

void DenseLayer::collect_params(std::vector<ParamSlot>& out) {
  out.push_back({name_ + ".weight", weights_.data, grad_weights_.data, true,
                 false});
  out.push_back({name_ + ".bias", bias_, grad_bias_, false, false});
}

void DenseLayer::zero_grads() {
  std::fill(grad_weights_.data.begin(), grad_weights_.data.end(), 0.0);
  std::fill(grad_bias_.begin(), grad_bias_.end(), 0.0);
}

// ------------------------------------------------------------------- pool

PoolLayer::PoolLayer(std::string name, const Shape& in, const LayerSpec& spec,
                     double init_std, std::uint64_t seed)
    : name_(std::move(name)), variant_(spec.pool_variant),
      geom_(spec.pool_geom) {
  geom_.validate({1, in.c, in.h, in.w});
  const int oh = geom_.out_h(in.h);
  const int ow = geom_.out_w(in.w);
  const Granularity gran =
      spec.pool_gran == GranularityKind::PerLayer
          ? Granularity::per_layer()
          : Granularity::per_layer_channel_region(in.c, oh, ow);
  const int len = geom_.region_len();
  switch (variant_) {
    case PoolVariant::Mixed:
    case PoolVariant::Mix5050:
      mixed_ = MixedParams::init(gran, 0.5);
      grad_mixed_.assign(mixed_.a.size(), 0.0);
      break;
    case PoolVariant::Gated:
      gated_ = GatedParams::init(gran, len, init_std, seed);
      grad_gated_.assign(gated_.omega.size(), 0.0);
      break;
    case PoolVariant::Tree2:
    case PoolVariant::Tree3:
      tree_ = TreeParams::init(variant_ == PoolVariant::Tree2 ? 2 : 3, gran,
                               len, init_std, seed);
      grad_tree_leaves_.assign(tree_.leaves.size(), 0.0);
      grad_tree_masks_.assign(tree_.masks.size(), 0.0);
      break;
    default:
      break;
  }
}

Shape PoolLayer::output_shape(const Shape& in) const {
  return {in.n, in.c, geom_.out_h(in.h), geom_.out_w(in.w)};
}

std::pair<Tensor, PoolCache> PoolLayer::run_forward(
    const Tensor& in, const LayerCtx& ctx) const {
  switch (variant_) {
    case PoolVariant::Avg: return avg_pool_forward(in, geom_);
    case PoolVariant::Max: return max_pool_forward(in, geom_);
    case PoolVariant::Stochastic:
      return stochastic_pool_forward(in, geom_, ctx.mode, ctx.rng_seed);
    case PoolVariant::Mixed:
    case PoolVariant::Mix5050:
      return mixed_pool_forward(in, geom_, mixed_);
    case PoolVariant::Gated: return gated_pool_forward(in, geom_, gated_);
    case PoolVariant::Tree2:
    case PoolVariant::Tree3: return tree_pool_forward(in, geom_, tree_);
  }
  throw std::logic_error("unreachable");
}

Tensor PoolLayer::forward(const Tensor& in, const LayerCtx& ctx) {
  auto [out, cache] = run_forward(in, ctx);
  cache_ = std::move(cache);
  return std::move(out);
}

Tensor PoolLayer::infer(const Tensor& in, const LayerCtx& ctx) const {
  return run_forward(in, ctx).first;
}

Tensor PoolLayer::backward(const Tensor& grad_out) {
  switch (variant_) {
    case PoolVariant::Avg: return avg_pool_backward(grad_out, cache_);
    case PoolVariant::Max: return max_pool_backward(grad_out, cache_);
    case PoolVariant::Stochastic:
      return stochastic_pool_backward(grad_out, cache_);
    case PoolVariant::Mixed:
    case PoolVariant::Mix5050: {
      MixedGrads g = mixed_pool_backward(grad_out, cache_, mixed_);
      if (variant_ == PoolVariant::Mixed) {
        for (std::size_t i = 0; i < grad_mixed_.size(); ++i) {
          grad_mixed_[i] += g.a[i];
        }
      }
      return std::move(g.input);
    }
    case PoolVariant::Gated: {
      GatedGrads g = gated_pool_backward(grad_out, cache_, gated_);
      for (std::size_t i = 0; i < grad_gated_.size(); ++i) {
        grad_gated_[i] += g.omega[i];
      }
      return std::move(g.input);
    }
    case PoolVariant::Tree2:
    case PoolVariant::Tree3: {
      TreeGrads g = tree_pool_backward(grad_out, cache_, tree_);
      for (std::size_t i = 0; i < grad_tree_leaves_.size(); ++i) {
        grad_tree_leaves_[i] += g.leaves[i];
      }
      for (std::size_t i = 0; i < grad_tree_masks_.size(); ++i) {
        grad_tree_masks_[i] += g.masks[i];
      }
      return std::move(g.input);
    }
  }
  throw std::logic_error("unreachable");
}

void PoolLayer::collect_params(std::vector<ParamSlot>& out) {
  switch (variant_) {
    case PoolVariant::Mixed:
      out.push_back({name_ + ".a", mixed_.a, grad_mixed_, false, true});
      break;
    case PoolVariant::Gated:
      out.push_back({name_ + ".omega", gated_.omega, grad_gated_, false,
                     false});
      break;
    case PoolVariant::Tree2:
    case PoolVariant::Tree3:
      out.push_back({name_ + ".leaves", tree_.leaves, grad_tree_leaves_,
                     false, false});
      out.push_back({name_ + ".masks", tree_.masks, grad_tree_masks_, false,
                     false});
      break;
    default:
      break;  // avg/max/stochastic/mix5050 learn nothing
  }
}

void PoolLayer::zero_grads() {
  std::fill(grad_mixed_.begin(), grad_mixed_.end(), 0.0);
  std::fill(grad_gated_.begin(), grad_gated_.end(), 0.0);
  std::fill(grad_tree_leaves_.begin(), grad_tree_leaves_.end(), 0.0);
  std::fill(grad_tree_masks_.begin(), grad_tree_masks_.end(), 0.0);
}

// ---------------------------------------------------------------- network

namespace {

std::string format_pool_spec(const LayerSpec& s) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "pool:%s:r%dx%d:s%d:p%d:%s",
                pool_variant_name(s.pool_variant), s.pool_geom.region_h,
                s.pool_geom.region_w, s.pool_geom.stride, s.pool_geom.padding,
                s.pool_gran == GranularityKind::PerLayer ? "gl" : "gcr");
  return buf;
}

std::string format_spec(const LayerSpec& s) {
  char buf[128];
  switch (s.kind) {
    case LayerSpec::Kind::Conv:
      std::snprintf(buf, sizeof(buf), "conv:%d:%d:%d:%d", s.conv_out,
                    s.conv_k, s.conv_stride, s.conv_pad);
      return buf;
    case LayerSpec::Kind::Relu: return "relu";
    case LayerSpec::Kind::Dense:
      std::snprintf(buf, sizeof(buf), "dense:%d", s.dense_units);
      return buf;
    case LayerSpec::Kind::Dropout:
      std::snprintf(buf, sizeof(buf), "dropout:%g", s.dropout_rate);
      return buf;
    case LayerSpec::Kind::Pool: return format_pool_spec(s);
    case LayerSpec::Kind::Softmax: return "softmax";
  }
  return "?";
}

}  // namespace

std::string arch_to_string(std::span<const LayerSpec> arch) {
  std::string out;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    if (i) out += ',';
    out += format_spec(arch[i]);
  }
  return out;
}

Network Network::build(const std::vector<LayerSpec>& arch, const Shape& input,
                       std::uint64_t seed, double pool_init_std) {
  check_shape(input);
  if (arch.empty() || arch.back().kind != LayerSpec::Kind::Softmax) {
    throw std::invalid_argument(
        "architecture must end with a softmax loss layer");
  }
  for (std::size_t i = 0; i + 1 < arch.size(); ++i) {
    if (arch[i].kind == LayerSpec::Kind::Softmax) {
      throw std::invalid_argument("softmax must be the final layer");
    }
  }
  Network net;
  net.seed_ = seed;
  net.input_shape_ = {1, input.c, input.h, input.w};
  net.arch_string_ = arch_to_string(arch);

  Shape cur = net.input_shape_;
  int conv_n = 0, relu_n = 0, pool_n = 0, drop_n = 0, dense_n = 0;
  for (std::size_t i = 0; i + 1 < arch.size(); ++i) {
    const LayerSpec& s = arch[i];
    const std::uint64_t lseed = mix_seed(seed, 0xa11ce, i);
    std::unique_ptr<Layer> layer;
    switch (s.kind) {
      case LayerSpec::Kind::Conv:
        layer = std::make_unique<ConvLayer>("conv" + std::to_string(++conv_n),
                                            cur.c, s, lseed);
        break;
      case LayerSpec::Kind::Relu:
        layer = std::make_unique<ReluLayer>("relu" + std::to_string(++relu_n));
        break;
      case LayerSpec::Kind::Pool:
        layer = std::make_unique<PoolLayer>("pool" + std::to_string(++pool_n),
                                            cur, s, pool_init_std, lseed);
        break;
      case LayerSpec::Kind::Dropout:
        layer = std::make_unique<DropoutLayer>(
            "dropout" + std::to_string(++drop_n), s.dropout_rate);
        break;
      case LayerSpec::Kind::Dense:
        layer = std::make_unique<DenseLayer>(
            "dense" + std::to_string(++dense_n), cur, s.dense_units, lseed);
        break;
      case LayerSpec::Kind::Softmax:
        break;
    }
    cur = layer->output_shape(cur);
    net.layers_.push_back(std::move(layer));
  }
  if (cur.h != 1 || cur.w != 1 || dense_n == 0) {
    throw std::invalid_argument(
        "network must end in a dense layer before softmax");
  }
  net.class_count_ = cur.c;
  return net;
}

std::vector<Layer*> Network::layers() {
  std::vector<Layer*> out;
  for (auto& l : layers_) out.push_back(l.get());
  return out;
}

std::vector<const Layer*> Network::layers() const {
  std::vector<const Layer*> out;
  for (const auto& l : layers_) out.push_back(l.get());
  return out;
}

void Network::check_input(const Tensor& x) const {
  if (x.shape().c != input_shape_.c || x.shape().h != input_shape_.h ||
      x.shape().w != input_shape_.w) {
    throw std::invalid_argument("network expects input " +
                                input_shape_.str() + " (any batch), got " +
                                x.shape().str());
  }
}

LayerCtx Network::ctx_for(std::size_t layer_idx, Mode mode) const {
  return {mode, mix_seed(seed_, step_, layer_idx)};
}

Tensor Network::forward(const Tensor& x, Mode mode) {
  check_input(x);
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur, ctx_for(i, mode));
  }
  return cur;
}

Tensor Network::backward(const Tensor& grad_logits) {
  Tensor cur = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    cur = layers_[i]->backward(cur);
  }
  return cur;
}

Tensor Network::infer(const Tensor& x) const {
  check_input(x);
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->infer(cur, {Mode::Test, 0});
  }
  return cur;
}

double Network::loss_and_gradients(const Tensor& x,
                                   std::span<const int> labels, Mode mode) {
  Tensor logits = forward(x, mode);
  XentResult xr = softmax_xent(logits, labels);
  backward(xr.grad_logits);
  return xr.loss;
}

double Network::loss_stateless(const Tensor& x,
                               std::span<const int> labels) const {
  Tensor logits = infer(x);
  const Shape& s = logits.shape();
  // Loss only; no gradient allocation.
  double loss = 0.0;
  for (int n = 0; n < s.n; ++n) {
    double mx = logits.at(n, 0, 0, 0);
    for (int c = 1; c < s.c; ++c) mx = std::max(mx, logits.at(n, c, 0, 0));
    double sum = 0.0;
    for (int c = 0; c < s.c; ++c) sum += std::exp(logits.at(n, c, 0, 0) - mx);
    loss += std::log(sum) - (logits.at(n, labels[n], 0, 0) - mx);
  }
  return loss / s.n;
}

std::vector<ParamSlot> Network::param_slots() {
  std::vector<ParamSlot> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

void Network::zero_grads() {
  for (auto& l : layers_) l->zero_grads();
}

std::size_t Network::param_count() {
  std::size_t n = 0;
  for (const ParamSlot& s : param_slots()) n += s.value.size();
  return n;
}

std::string Network::find_nonfinite_layer(const Tensor& x, Mode mode) const {
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->infer(cur, ctx_for(i, mode));
    if (!cur.all_finite()) return layers_[i]->name();
  }
  return "";
}

}  // namespace poolgen
