#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mld/rng.hpp"
#include "mld/tensor.hpp"

namespace mld {

// One synthetic modality. Class c sits at angle 2*pi*c/K + phase on a circle
// of radius `radius`, embedded in the first data_dim - nuisance_dims
// coordinates by a per-modality random orthonormal map, plus isotropic
// Gaussian noise. The remaining nuisance_dims coordinates are
// label-independent N(0, nuisance_scale^2).
struct ModalityDataConfig {
  std::string name;
  std::size_t data_dim = 8;
  double noise_scale = 0.1;
  double radius = 1.0;
  std::size_t nuisance_dims = 0;
  double nuisance_scale = 0.0;

  // Preset emulating a harder, less robust modality: larger noise and
  // label-independent nuisance coordinates.
  static ModalityDataConfig hard(std::string name, std::size_t data_dim);
  std::size_t signal_dims() const { return data_dim - nuisance_dims; }
};

struct SyntheticConfig {
  std::size_t classes = 4;
  std::size_t samples_per_class = 500;
  std::uint64_t seed = 0;
  // Selects an independent sample draw over the same class templates, so a
  // held-out split shares geometry with the training split.
  std::uint64_t sample_stream = 0;
  std::vector<ModalityDataConfig> modalities;

  void validate() const;
};

// Modalities aligned by row; pairing[m][i] is the source row of modality m
// for sample i (identity for freshly generated data).
struct MultiModalDataset {
  std::size_t classes = 0;
  std::vector<std::string> names;
  std::vector<Tensor> modalities;  // each [n, data_dim]
  std::vector<std::int64_t> labels;
  std::vector<std::vector<std::int64_t>> pairing;

  std::size_t size() const { return labels.size(); }
  std::size_t modality_count() const { return modalities.size(); }
  std::size_t index_of(const std::string& name) const;
  void validate() const;
};

MultiModalDataset generate_synthetic(const SyntheticConfig& config);

// Class templates of one modality ([K, data_dim]) as generated with
// `config`; nuisance coordinates are zero.
Tensor class_templates(const SyntheticConfig& config, std::size_t modality);

// Each sample of `a` is paired with k_pairs samples of `b` carrying the same
// label, drawn by cycling through a shuffled per-class pool of b. Output has
// a.size() * k_pairs rows and the modalities of a followed by those of b.
MultiModalDataset pair_by_label(const MultiModalDataset& a,
                                const MultiModalDataset& b,
                                std::size_t k_pairs, Rng& rng);

// Rows selected by index in every modality.
MultiModalDataset subset(const MultiModalDataset& data,
                         const std::vector<std::size_t>& rows);

// Container entries: "dataset.classes", "dataset.names" (bytes),
// "data.<name>" per modality, "labels", "pairing" ([n, M]).
void save_dataset(const MultiModalDataset& data,
                  const std::filesystem::path& path);
MultiModalDataset load_dataset(const std::filesystem::path& path);

}  // namespace mld
