#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "poolgen/network.hpp"

namespace poolgen {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Plain-text key=value run configuration. '#' starts a comment; unknown
// keys are errors. Together with the seed this fully determines a run.
struct RunConfig {
  std::string dataset = "synthetic";  // synthetic | mnist | cifar10
  std::string data_dir;               // falls back to POOLGEN_DATA_DIR
  int train_samples = 2000;
  int test_samples = 400;
  double noise = 0.1;                 // synthetic pixel noise

  std::string arch =
      "conv:16,relu,conv:16,relu,pool:max,conv:32,relu,conv:32,relu,"
      "pool:max,dense:4,softmax";

  std::vector<double> lr_schedule{0.025, 0.0125, 0.0001};
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int patience = 5;
  int batch_size = 64;
  int max_epochs = 30;
  double init_std = 0.5;  // pooling filter / mask init
  double val_fraction = 0.1;
  std::uint64_t seed = 1;
  int bench_iters = 1000;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Architecture grammar (comma-separated layer specs):
//   conv:OUT[:K[:S[:P]]]      3x3 stride-1 pad-1 by default
//   relu
//   pool:VARIANT[:rHxW][:sS][:pP][:gl|:gcr]
//       VARIANT in {avg,max,stochastic,mix5050,mixed,gated,tree2,tree3};
//       region defaults to 2x2, stride 2, padding 0, per-layer params
//   dropout:RATE
//   dense:UNITS
//   softmax                    must be last
std::vector<LayerSpec> parse_arch(const std::string& text);

}  // namespace poolgen
