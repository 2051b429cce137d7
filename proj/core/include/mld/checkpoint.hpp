#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mld/mlp.hpp"
#include "mld/tensor.hpp"

namespace mld {

// Binary tensor container shared by datasets and checkpoints.
//
// Layout (all integers little-endian):
//   "MMLD"                magic, 4 bytes
//   u32 version           currently 1
//   u32 count             number of tensors
//   per tensor:
//     u32 name_len, name  UTF-8 bytes, no terminator
//     u32 rank
//     u64 dims[rank]
//     f64 payload[prod(dims)]
//
// Integer-valued tensors (labels, layout dims) are stored as exact f64
// values and checked for integrality on read.
inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr char kArchiveMagic[4] = {'M', 'M', 'L', 'D'};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class TensorArchive {
 public:
  // Appends; throws IoError on a duplicate name.
  void add(std::string name, Tensor tensor);
  void add_integers(std::string name, const std::vector<std::int64_t>& values);
  void add_scalar(std::string name, double value);

  bool contains(std::string_view name) const;
  // Throws IoError if missing.
  const Tensor& get(std::string_view name) const;
  std::vector<std::int64_t> get_integers(std::string_view name) const;
  double get_scalar(std::string_view name) const;

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<std::uint8_t> serialize() const;
  static TensorArchive deserialize(const std::vector<std::uint8_t>& bytes);

  void write(const std::filesystem::path& path) const;
  static TensorArchive read(const std::filesystem::path& path);

  friend bool operator==(const TensorArchive& a, const TensorArchive& b);

 private:
  std::vector<NamedTensor> entries_;
};

// Stores the layer tensors as "<prefix>.layer{k}.{w|b}" plus
// "<prefix>.arch" describing activation and block structure.
void add_mlp(TensorArchive& archive, const std::string& prefix,
             const MlpParams& params);
MlpParams load_mlp(const TensorArchive& archive, const std::string& prefix);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace mld
