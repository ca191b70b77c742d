#pragma once

#include <cstdint>

namespace poolgen {

// Deterministic 64-bit generator (splitmix64). Every random draw in the
// library goes through this class so that a (seed) pair pins the full
// stream independently of the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();

  // Uniform integer in [0, bound).
  int uniform_int(int bound);

  // Box-Muller normal draw; stddev == 0 returns mean exactly and consumes
  // no randomness.
  double normal(double mean, double stddev);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Order-sensitive seed derivation for per-step / per-layer streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

}  // namespace poolgen
