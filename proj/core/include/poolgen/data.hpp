#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "poolgen/tensor.hpp"

namespace poolgen {

struct DataFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Images live in [0, 1]; channel_means is filled once preprocessing has
// decided what to subtract (usually the training-set means).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int class_count = 0;
  std::vector<double> channel_means;
};

// Standard IDX files (big-endian, magic 0x803 for images, 0x801 for
// labels). Pixel bytes scale to [0, 1] as byte / 255.
Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path);

// One CIFAR-10 binary batch: 3073-byte records, 1 label byte + 3072 pixel
// bytes (R, G, B planes of a row-major 32x32 image).
Dataset load_cifar10_bin(const std::string& path);

// Concatenates `extra` onto `base`; shapes and class counts must agree.
void append_dataset(Dataset& base, const Dataset& extra);

// Deterministic 4-class 1x16x16 toy set: filled square, hollow square,
// diagonal bar, disk. Classes are balanced (label = i mod 4), positions
// jitter by up to 2 pixels, and `noise` adds clamped Gaussian pixel noise.
Dataset synthesize_shapes(int n, std::uint64_t seed, double noise = 0.1);

std::vector<double> compute_channel_means(const Tensor& images);
Tensor subtract_means(const Tensor& images, std::span<const double> means);
Tensor add_means(const Tensor& images, std::span<const double> means);

}  // namespace poolgen
