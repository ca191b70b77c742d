#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "poolgen/layers.hpp"
#include "poolgen/pooling.hpp"
#include "poolgen/tensor.hpp"

namespace poolgen {

enum class PoolVariant { Avg, Max, Stochastic, Mix5050, Mixed, Gated, Tree2, Tree3 };

const char* pool_variant_name(PoolVariant v);

// One entry of an architecture description. Networks are a flat sequence of
// these, ending in Softmax.
struct LayerSpec {
  enum class Kind { Conv, Relu, Dense, Dropout, Pool, Softmax };
  Kind kind = Kind::Relu;

  int conv_out = 0;
  int conv_k = 3;
  int conv_stride = 1;
  int conv_pad = 1;

  int dense_units = 0;

  double dropout_rate = 0.5;

  PoolVariant pool_variant = PoolVariant::Max;
  PoolGeometry pool_geom{2, 2, 2, 0};
  GranularityKind pool_gran = GranularityKind::PerLayer;
};

// A mutable view of one parameter tensor plus its gradient accumulator.
struct ParamSlot {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  bool weight_decay = false;  // conv/dense weights only
  bool clip_unit = false;     // mixed pooling proportions
};

struct LayerCtx {
  Mode mode = Mode::Test;
  std::uint64_t rng_seed = 0;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual const std::string& name() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  // Records whatever backward will need.
  virtual Tensor forward(const Tensor& in, const LayerCtx& ctx) = 0;
  // Stateless forward; safe to call concurrently on a const network.
  virtual Tensor infer(const Tensor& in, const LayerCtx& ctx) const = 0;
  // Consumes the recorded state and accumulates parameter gradients.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_params(std::vector<ParamSlot>&) {}
  virtual void zero_grads() {}
};

class ConvLayer final : public Layer {
 public:
  ConvLayer(std::string name, int in_c, const LayerSpec& spec,
            std::uint64_t seed);
  const std::string& name() const override { return name_; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& in, const LayerCtx& ctx) override;
  Tensor infer(const Tensor& in, const LayerCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamSlot>& out) override;
  void zero_grads() override;

  const Tensor& kernels() const { return kernels_; }

 private:
  std::string name_;
  int stride_;
  int padding_;
  Tensor kernels_;
  std::vector<double> bias_;
  Tensor grad_kernels_;
  std::vector<double> grad_bias_;
  Tensor cached_input_;
};

class ReluLayer final : public Layer {
 public:
  explicit ReluLayer(std::string name) : name_(std::move(name)) {}
  const std::string& name() const override { return name_; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& in, const LayerCtx& ctx) override;
  Tensor infer(const Tensor& in, const LayerCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out) override;
  const Tensor& last_input() const { return cached_input_; }

 private:
  std::string name_;
  Tensor cached_input_;
};

class DropoutLayer final : public Layer {
 public:
  DropoutLayer(std::string name, double rate)
      : name_(std::move(name)), rate_(rate) {}
  const std::string& name() const override { return name_; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& in, const LayerCtx& ctx) override;
  Tensor infer(const Tensor& in, const LayerCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out) override;
  double rate() const { return rate_; }

 private:
  std::string name_;
  double rate_;
  std::vector<double> mask_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::string name, const Shape& in, int units, std::uint64_t seed);
  const std::string& name() const override { return name_; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& in, const LayerCtx& ctx) override;
  Tensor infer(const Tensor& in, const LayerCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamSlot>& out) override;
  void zero_grads() override;
  int units() const { return weights_.rows; }

 private:
  std::string name_;
  Matrix weights_;
  std::vector<double> bias_;
  Matrix grad_weights_;
  std::vector<double> grad_bias_;
  Tensor cached_input_;
};

class PoolLayer final : public Layer {
 public:
  PoolLayer(std::string name, const Shape& in, const LayerSpec& spec,
            double init_std, std::uint64_t seed);
  const std::string& name() const override { return name_; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& in, const LayerCtx& ctx) override;
  Tensor infer(const Tensor& in, const LayerCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamSlot>& out) override;
  void zero_grads() override;

  PoolVariant variant() const { return variant_; }
  const PoolGeometry& geometry() const { return geom_; }
  const MixedParams& mixed_params() const { return mixed_; }
  const GatedParams& gated_params() const { return gated_; }
  const TreeParams& tree_params() const { return tree_; }
  const PoolCache& last_cache() const { return cache_; }

 private:
  std::pair<Tensor, PoolCache> run_forward(const Tensor& in,
                                           const LayerCtx& ctx) const;

  std::string name_;
  PoolVariant variant_;
  PoolGeometry geom_;
  MixedParams mixed_;
  GatedParams gated_;
  TreeParams tree_;
  std::vector<double> grad_mixed_;
  std::vector<double> grad_gated_;
  std::vector<double> grad_tree_leaves_;
  std::vector<double> grad_tree_masks_;
  PoolCache cache_;
};

// Feed-forward network: an ordered layer list ending (implicitly) in the
// softmax cross-entropy loss, plus the rng seed and step counter that pin
// every stochastic choice made during training.
class Network {
 public:
  static Network build(const std::vector<LayerSpec>& arch, const Shape& input,
                       std::uint64_t seed, double pool_init_std = 0.5);

  const std::string& arch() const { return arch_string_; }
  const Shape& input_shape() const { return input_shape_; }
  int class_count() const { return class_count_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }
  void bump_step() { ++step_; }

  std::vector<Layer*> layers();
  std::vector<const Layer*> layers() const;

  // Training-path forward; per-layer rng streams derive from
  // (seed, step, layer index).
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_logits);
  // Stateless test-mode forward; thread-safe on a const network.
  Tensor infer(const Tensor& x) const;

  double loss_and_gradients(const Tensor& x, std::span<const int> labels,
                            Mode mode);
  double loss_stateless(const Tensor& x, std::span<const int> labels) const;

  std::vector<ParamSlot> param_slots();
  void zero_grads();
  std::size_t param_count();

  // Name of the first layer producing a non-finite value, or "" if clean.
  std::string find_nonfinite_layer(const Tensor& x, Mode mode) const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::string arch_string_;
  Shape input_shape_{};
  int class_count_ = 0;
  std::uint64_t seed_ = 0;
  std::uint64_t step_ = 0;

  void check_input(const Tensor& x) const;
  LayerCtx ctx_for(std::size_t layer_idx, Mode mode) const;
};

// Canonical textual form of an architecture, also used by checkpoints.
std::string arch_to_string(std::span<const LayerSpec> arch);

}  // namespace poolgen
