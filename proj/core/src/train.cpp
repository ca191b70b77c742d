#include "poolgen/train.hpp"

#include <algorithm>
#include <cmath>

#include "poolgen/evaluate.hpp"
#include "poolgen/layers.hpp"
#include "poolgen/rng.hpp"

namespace poolgen {

namespace {

Tensor gather_batch(const Tensor& images, std::span<const int> order,
                    std::size_t begin, std::size_t end,
                    std::span<const double> means) {
  const Shape& s = images.shape();
  Tensor batch({static_cast<int>(end - begin), s.c, s.h, s.w});
  for (std::size_t i = begin; i < end; ++i) {
    const int src = order[i];
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          batch.at(static_cast<int>(i - begin), c, y, x) =
              images.at(src, c, y, x) - means[c];
        }
  }
  return batch;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::pair<Dataset, Dataset> split_validation(const Dataset& train,
                                             double val_fraction) {
  const Shape& s = train.images.shape();
  const int n_val = std::max(1, static_cast<int>(s.n * val_fraction));
  const int n_train = s.n - n_val;
  if (n_train < 1) {
    throw std::invalid_argument("validation split leaves no training data");
  }
  auto slice = [&](int begin, int end) {
    Dataset out;
    out.class_count = train.class_count;
    out.channel_means = train.channel_means;
    out.images = Tensor({end - begin, s.c, s.h, s.w});
    out.labels.assign(train.labels.begin() + begin,
                      train.labels.begin() + end);
    std::copy(train.images.data().begin() + train.images.index(begin, 0, 0, 0),
              train.images.data().begin() +
                  train.images.index(begin, 0, 0, 0) + out.images.size(),
              out.images.data().begin());
    return out;
  };
  return {slice(0, n_train), slice(n_train, s.n)};
}

void log_pool_params(const Network& net, int epoch,
                     std::vector<PoolParamLogRow>& rows) {
  for (const Layer* layer : net.layers()) {
    const auto* pool = dynamic_cast<const PoolLayer*>(layer);
    if (!pool) continue;
    switch (pool->variant()) {
      case PoolVariant::Mixed:
      case PoolVariant::Mix5050: {
        const MixedParams& p = pool->mixed_params();
        for (std::size_t g = 0; g < p.a.size(); ++g) {
          rows.push_back({epoch, pool->name(), "a", static_cast<int>(g),
                          p.a[g]});
        }
        break;
      }
      case PoolVariant::Gated: {
        const GatedParams& p = pool->gated_params();
        for (int g = 0; g < p.granularity.group_count(); ++g) {
          rows.push_back({epoch, pool->name(), "omega_norm", g,
                          l2_norm(p.mask(g))});
        }
        break;
      }
      case PoolVariant::Tree2:
      case PoolVariant::Tree3: {
        const TreeParams& p = pool->tree_params();
        const std::size_t leaf_block =
            static_cast<std::size_t>(p.leaf_count()) * p.region_len;
        const std::size_t mask_block =
            static_cast<std::size_t>(p.internal_count()) * p.region_len;
        for (int g = 0; g < p.granularity.group_count(); ++g) {
          rows.push_back(
              {epoch, pool->name(), "leaf_norm", g,
               l2_norm({p.leaves.data() + g * leaf_block, leaf_block})});
          rows.push_back(
              {epoch, pool->name(), "mask_norm", g,
               l2_norm({p.masks.data() + g * mask_block, mask_block})});
        }
        break;
      }
      default:
        break;
    }
  }
}

TrainResult train_network(Network& net, SgdOptimizer& opt,
                          const Dataset& train, const Dataset& val,
                          const TrainOptions& options, int first_epoch) {
  if (train.channel_means.empty() || val.channel_means.empty()) {
    throw std::invalid_argument("datasets must carry channel means");
  }
  TrainResult result;
  const int n = train.images.shape().n;
  std::vector<int> order(n);

  for (int epoch = first_epoch; epoch < options.max_epochs; ++epoch) {
    if (opt.schedule().finished()) {
      result.schedule_exhausted = true;
      break;
    }
    const double lr = opt.schedule().current();

    for (int i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(net.seed(), 0x5u, epoch));
    for (int i = n - 1; i > 0; --i) {
      const int j = shuffle_rng.uniform_int(i + 1);
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    int correct = 0;
    std::vector<int> batch_labels;
    for (int begin = 0; begin < n; begin += options.batch_size) {
      const int end = std::min(begin + options.batch_size, n);
      const Tensor batch = gather_batch(train.images, order, begin, end,
                                        train.channel_means);
      batch_labels.resize(end - begin);
      for (int i = begin; i < end; ++i) {
        batch_labels[i - begin] = train.labels[order[i]];
      }

      net.zero_grads();
      const Tensor logits = net.forward(batch, Mode::Train);
      const XentResult xr = softmax_xent(logits, batch_labels);
      if (!std::isfinite(xr.loss)) {
        std::string layer = net.find_nonfinite_layer(batch, Mode::Train);
        if (layer.empty()) layer = "softmax";
        throw TrainingDiverged(layer);
      }
      net.backward(xr.grad_logits);
      std::vector<ParamSlot> slots = net.param_slots();
      opt.step(slots, lr);
      net.bump_step();

      loss_sum += xr.loss * (end - begin);
      for (int i = 0; i < end - begin; ++i) {
        int best = 0;
        for (int c = 1; c < logits.shape().c; ++c) {
          if (logits.at(i, c, 0, 0) > logits.at(i, best, 0, 0)) best = c;
        }
        if (best == batch_labels[i]) ++correct;
      }
    }

    EpochMetrics row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_sum / n;
    row.train_acc = static_cast<double>(correct) / n;
    row.val_err = 1.0 - evaluate_accuracy(net, val.images, val.labels,
                                          val.channel_means, options.threads);
    result.metrics.push_back(row);
    log_pool_params(net, epoch, result.pool_log);

    const bool done = opt.schedule().observe(row.val_err);
    if (options.stop_after_epoch && options.stop_after_epoch(row)) break;
    if (done) {
      result.schedule_exhausted = true;
      break;
    }
  }
  return result;
}

}  // namespace poolgen
