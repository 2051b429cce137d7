#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mld/tensor.hpp"

namespace mld {

class TensorArchive;

struct ModalitySpec {
  std::string name;
  std::size_t data_dim = 0;
  std::size_t latent_dim = 0;

  void validate() const;
};

// Placement of each modality's latent block inside the joint latent
// Z = [Z^1, ..., Z^M].
class ModalityLayout {
 public:
  ModalityLayout() = default;
  explicit ModalityLayout(std::vector<ModalitySpec> specs);

  std::size_t modality_count() const { return specs_.size(); }
  std::size_t total_dim() const { return total_dim_; }
  const std::vector<ModalitySpec>& specs() const { return specs_; }
  const ModalitySpec& spec(std::size_t i) const { return specs_.at(i); }
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }
  std::size_t latent_dim(std::size_t i) const { return specs_.at(i).latent_dim; }
  const std::vector<std::size_t>& offsets() const { return offsets_; }
  // Index of the modality with this name; throws ConfigError if absent.
  std::size_t index_of(const std::string& name) const;
  // Sum of latent dims over the given modalities.
  std::size_t dim_of(std::span<const std::size_t> modalities) const;

  friend bool operator==(const ModalityLayout&, const ModalityLayout&);

 private:
  std::vector<ModalitySpec> specs_;
  std::vector<std::size_t> offsets_;
  std::size_t total_dim_ = 0;
};

bool operator==(const ModalitySpec& a, const ModalitySpec& b);

// Split of the modalities {0..M-1} into generated (a1) and conditioning
// (a2) sets. Both are sorted and disjoint, and together cover all
// modalities. Indices are zero-based.
struct SubsetPartition {
  std::size_t modality_count = 0;
  std::vector<std::size_t> a1;
  std::vector<std::size_t> a2;

  static SubsetPartition from_generated(std::size_t m,
                                        std::vector<std::size_t> generated);
  static SubsetPartition from_conditioning(std::size_t m,
                                           std::vector<std::size_t> conditioning);
  static SubsetPartition unconditional(std::size_t m);

  bool is_generated(std::size_t modality) const;
  // Throws ConfigError if the sets overlap, miss a modality, or a1 is empty.
  void validate() const;
};

bool operator==(const SubsetPartition& a, const SubsetPartition& b);

// Dense 0/1 vector over the joint latent, 1 on the blocks of a1.
struct ModalityMask {
  std::vector<double> values;
};

// Per-modality diffusion times; 0 marks a frozen conditioning modality.
struct MultiTimeVector {
  std::vector<double> times;
};

// 0/1 indicator over the blocks of `modalities`; may be empty.
ModalityMask block_indicator(const ModalityLayout& layout,
                             std::span<const std::size_t> modalities);
ModalityMask build_mask(const ModalityLayout& layout,
                        const SubsetPartition& partition);
MultiTimeVector build_multitime(const SubsetPartition& partition, double t,
                                double horizon = 1.0);

// One modality's latent values: rank 1 [latent_dim] or rank 2 [n, latent_dim].
struct ModalityBlock {
  std::size_t modality = 0;
  Tensor values;
};

// Places generated and conditioning blocks at their layout offsets. Every
// modality must appear exactly once across the two lists.
Tensor compose(const ModalityLayout& layout,
               std::span<const ModalityBlock> generated,
               std::span<const ModalityBlock> conditioning);
// Blocks given in modality order.
Tensor compose_all(const ModalityLayout& layout, std::span<const Tensor> blocks);
// Per-modality blocks in modality order; rank matches the input.
std::vector<Tensor> split(const ModalityLayout& layout, const Tensor& joint);

// "layout.dims", "layout.data_dims" and "layout.names" (UTF-8 bytes, '\n'
// separated).
void add_layout(TensorArchive& archive, const ModalityLayout& layout);
ModalityLayout load_layout(const TensorArchive& archive);

}  // namespace mld
