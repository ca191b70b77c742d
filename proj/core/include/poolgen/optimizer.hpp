#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "poolgen/network.hpp"

namespace poolgen {

// Step-down learning rate driven by validation error: after `patience`
// evaluations without a new best, advance to the next rate; stagnating at
// the last rate finishes training.
class LrSchedule {
 public:
  LrSchedule() = default;
  LrSchedule(std::vector<double> rates, int patience);

  double current() const { return rates_[index_]; }
  bool finished() const { return finished_; }
  std::size_t index() const { return index_; }
  int stale() const { return stale_; }
  double best() const { return best_; }

  // Feeds one validation-error observation; returns true when training
  // should stop.
  bool observe(double val_err);

  // Checkpoint restore.
  void restore(std::size_t index, int stale, double best, bool finished);
  const std::vector<double>& rates() const { return rates_; }
  int patience() const { return patience_; }

 private:
  std::vector<double> rates_{0.025, 0.0125, 0.0001};
  int patience_ = 5;
  std::size_t index_ = 0;
  int stale_ = 0;
  // +inf until the first observation; serializes losslessly.
  double best_ = std::numeric_limits<double>::infinity();
  bool finished_ = false;
};

// SGD with momentum and decoupled-by-slot weight decay:
//   v <- momentum * v - lr * (g + wd * p)
//   p <- p + v
// Weight decay applies only to slots flagged for it (conv/dense weights);
// pooling parameters and biases are exempt. Mixed pooling proportions are
// clipped back to [0, 1] after the update.
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay, LrSchedule schedule);

  void step(std::span<ParamSlot> slots, double lr);
  void step(std::span<ParamSlot> slots) { step(slots, schedule_.current()); }

  LrSchedule& schedule() { return schedule_; }
  const LrSchedule& schedule() const { return schedule_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

  std::vector<std::vector<double>>& velocity() { return velocity_; }
  const std::vector<std::vector<double>>& velocity() const {
    return velocity_;
  }

 private:
  double momentum_ = 0.9;
  double weight_decay_ = 5e-4;
  LrSchedule schedule_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace poolgen
