#include "mld/rng.hpp"

namespace mld {

std::size_t Rng::index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

Tensor Rng::normal_tensor(std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  fill_normal(t);
  return t;
}

void Rng::fill_normal(Tensor& t) {
  for (auto& v : t.values()) v = normal_(engine_);
}

Rng Rng::fork() { return Rng(mix_seed(engine_(), 0)); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mld
