#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "poolgen/data.hpp"
#include "poolgen/network.hpp"
#include "poolgen/optimizer.hpp"

namespace poolgen {

// Raised when a forward pass goes non-finite; carries the offending layer.
struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(const std::string& layer)
      : std::runtime_error("non-finite loss; first non-finite layer: " +
                           layer),
        layer_name(layer) {}
  std::string layer_name;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_err = 0.0;
};

// One learned-pooling statistic per (epoch, layer, group): the raw `a` for
// mixed pooling, L2 norms for gating masks and tree filters.
struct PoolParamLogRow {
  int epoch = 0;
  std::string layer;
  std::string stat;
  int group = 0;
  double value = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  std::vector<PoolParamLogRow> pool_log;
  bool schedule_exhausted = false;
};

struct TrainOptions {
  int batch_size = 64;
  int max_epochs = 30;
  int threads = 1;
  // Optional early stop, checked after each epoch.
  std::function<bool(const EpochMetrics&)> stop_after_epoch;
};

// Splits off the last `val_fraction` of a dataset as the validation set.
std::pair<Dataset, Dataset> split_validation(const Dataset& train,
                                             double val_fraction);

// Epoch loop: seeded shuffle, mini-batch SGD, per-epoch metrics and
// validation-driven schedule stepping. Runs until the schedule is exhausted
// or max_epochs is hit. `train` must carry channel means (they are
// subtracted on the fly).
TrainResult train_network(Network& net, SgdOptimizer& opt,
                          const Dataset& train, const Dataset& val,
                          const TrainOptions& options, int first_epoch = 0);

void log_pool_params(const Network& net, int epoch,
                     std::vector<PoolParamLogRow>& rows);

}  // namespace poolgen
