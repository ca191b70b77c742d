#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "poolgen/network.hpp"
#include "poolgen/optimizer.hpp"

namespace poolgen {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Wrong magic or unsupported version byte.
struct CheckpointVersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};

// Complete training state. Restoring and continuing reproduces the exact
// trajectory of an uninterrupted run: parameters, velocities, schedule
// state and the step counter (which pins all derived rng streams) are all
// here. Serialized little-endian with an 8-byte magic, a version byte, the
// architecture manifest and raw f64 payloads.
struct Checkpoint {
  std::string arch;
  int in_c = 0;
  int in_h = 0;
  int in_w = 0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint32_t epoch = 0;

  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint32_t patience = 5;
  std::vector<double> lr_rates;
  std::uint32_t lr_index = 0;
  std::uint32_t lr_stale = 0;
  double lr_best = 0.0;
  bool lr_finished = false;

  double pool_init_std = 0.5;
  std::vector<double> channel_means;

  std::vector<std::pair<std::string, std::vector<double>>> params;
  std::vector<std::vector<double>> velocity;  // empty until first step
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint snapshot(Network& net, const SgdOptimizer& opt,
                    std::uint32_t epoch,
                    const std::vector<double>& channel_means,
                    double pool_init_std);

struct RestoredState {
  Network network;
  SgdOptimizer optimizer;
  std::uint32_t epoch = 0;
  std::vector<double> channel_means;
  double pool_init_std = 0.5;
};
RestoredState restore_checkpoint(const Checkpoint& ck);

}  // namespace poolgen
