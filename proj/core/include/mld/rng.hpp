#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mld/tensor.hpp"

namespace mld {

// Seeded random source. Every stochastic routine takes an Rng& so that
// runs are reproducible from a single seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  double uniform() { return std::uniform_real_distribution<double>()(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return normal_(engine_); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  Tensor normal_tensor(std::vector<std::size_t> shape);
  void fill_normal(Tensor& t);

  // Independent child stream derived from this stream's next output.
  Rng fork();

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uint64_t seed_;
};

// SplitMix64 finalizer; used to derive well-separated sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mld
