#include "poolgen/optimizer.hpp"

#include <stdexcept>

namespace poolgen {

LrSchedule::LrSchedule(std::vector<double> rates, int patience)
    : rates_(std::move(rates)), patience_(patience) {
  if (rates_.empty()) {
    throw std::invalid_argument("learning-rate schedule must be non-empty");
  }
  for (std::size_t i = 0; i + 1 < rates_.size(); ++i) {
    if (!(rates_[i] > rates_[i + 1])) {
      throw std::invalid_argument(
          "learning-rate schedule must be strictly decreasing");
    }
  }
  if (rates_.front() <= 0.0) {
    throw std::invalid_argument("learning rates must be positive");
  }
  if (patience_ < 1) {
    throw std::invalid_argument("schedule patience must be >= 1");
  }
}

bool LrSchedule::observe(double val_err) {
  if (finished_) return true;
  if (val_err < best_) {
    best_ = val_err;
    stale_ = 0;
    return false;
  }
  ++stale_;
  if (stale_ >= patience_) {
    if (index_ + 1 < rates_.size()) {
      ++index_;
      stale_ = 0;
    } else {
      finished_ = true;
    }
  }
  return finished_;
}

void LrSchedule::restore(std::size_t index, int stale, double best,
                         bool finished) {
  if (index >= rates_.size()) {
    throw std::invalid_argument("schedule index out of range");
  }
  index_ = index;
  stale_ = stale;
  best_ = best;
  finished_ = finished;
}

SgdOptimizer::SgdOptimizer(double momentum, double weight_decay,
                           LrSchedule schedule)
    : momentum_(momentum), weight_decay_(weight_decay),
      schedule_(std::move(schedule)) {
  if (momentum_ < 0.0 || momentum_ >= 1.0) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (weight_decay_ < 0.0) {
    throw std::invalid_argument("weight decay must be non-negative");
  }
}

void SgdOptimizer::step(std::span<ParamSlot> slots, double lr) {
  if (velocity_.empty()) {
    velocity_.reserve(slots.size());
    for (const ParamSlot& s : slots) {
      velocity_.emplace_back(s.value.size(), 0.0);
    }
  }
  if (velocity_.size() != slots.size()) {
    throw std::invalid_argument("optimizer bound to a different network");
  }
  for (std::size_t k = 0; k < slots.size(); ++k) {
    ParamSlot& s = slots[k];
    std::vector<double>& v = velocity_[k];
    if (v.size() != s.value.size()) {
      throw std::invalid_argument("velocity shape mismatch for " + s.name);
    }
    const double wd = s.weight_decay ? weight_decay_ : 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum_ * v[i] - lr * (s.grad[i] + wd * s.value[i]);
      s.value[i] += v[i];
    }
    if (s.clip_unit) {
      for (double& p : s.value) {
        if (p < 0.0) p = 0.0;
        if (p > 1.0) p = 1.0;
      }
    }
  }
}

}  // namespace poolgen
