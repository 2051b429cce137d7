#include "mld/modality.hpp"

#include <algorithm>
#include <set>

#include "mld/checkpoint.hpp"
#include "mld/error.hpp"

namespace mld {

void ModalitySpec::validate() const {
  if (name.empty()) throw ConfigError("modality name must not be empty");
  if (data_dim == 0) {
    throw ConfigError("modality '" + name + "': data_dim must be >= 1");
  }
  if (latent_dim == 0) {
    throw ConfigError("modality '" + name + "': latent_dim must be >= 1");
  }
}

bool operator==(const ModalitySpec& a, const ModalitySpec& b) {
  return a.name == b.name && a.data_dim == b.data_dim &&
         a.latent_dim == b.latent_dim;
}

ModalityLayout::ModalityLayout(std::vector<ModalitySpec> specs)
    : specs_(std::move(specs)) {
  if (specs_.empty()) throw ConfigError("layout needs at least one modality");
  std::set<std::string> names;
  for (const auto& s : specs_) {
    s.validate();
    if (!names.insert(s.name).second) {
      throw ConfigError("duplicate modality name '" + s.name + "'");
    }
    offsets_.push_back(total_dim_);
    total_dim_ += s.latent_dim;
  }
}

std::size_t ModalityLayout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].name == name) return i;
  }
  throw ConfigError("unknown modality '" + name + "'");
}

std::size_t ModalityLayout::dim_of(
    std::span<const std::size_t> modalities) const {
  std::size_t d = 0;
  for (auto m : modalities) d += latent_dim(m);
  return d;
}

bool operator==(const ModalityLayout& a, const ModalityLayout& b) {
  return a.specs_ == b.specs_;
}

namespace {
std::vector<std::size_t> complement(std::size_t m,
                                    const std::vector<std::size_t>& set) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m; ++i) {
    if (std::find(set.begin(), set.end(), i) == set.end()) out.push_back(i);
  }
  return out;
}
}  // namespace

SubsetPartition SubsetPartition::from_generated(
    std::size_t m, std::vector<std::size_t> generated) {
  std::sort(generated.begin(), generated.end());
  SubsetPartition p{m, generated, complement(m, generated)};
  p.validate();
  return p;
}

SubsetPartition SubsetPartition::from_conditioning(
    std::size_t m, std::vector<std::size_t> conditioning) {
  std::sort(conditioning.begin(), conditioning.end());
  SubsetPartition p{m, complement(m, conditioning), conditioning};
  p.validate();
  return p;
}

SubsetPartition SubsetPartition::unconditional(std::size_t m) {
  return from_conditioning(m, {});
}

bool SubsetPartition::is_generated(std::size_t modality) const {
  return std::binary_search(a1.begin(), a1.end(), modality);
}

void SubsetPartition::validate() const {
  if (a1.empty()) {
    throw ConfigError("partition has no generated modality (a1 is empty)");
  }
  std::vector<int> seen(modality_count, 0);
  for (const auto* set : {&a1, &a2}) {
    for (auto i : *set) {
      if (i >= modality_count) {
        throw ConfigError("partition index " + std::to_string(i) +
                          " out of range for " +
                          std::to_string(modality_count) + " modalities");
      }
      if (seen[i]++) {
        throw ConfigError("modality " + std::to_string(i) +
                          " appears twice in partition");
      }
    }
  }
  if (a1.size() + a2.size() != modality_count) {
    throw ConfigError("partition does not cover every modality");
  }
}

bool operator==(const SubsetPartition& a, const SubsetPartition& b) {
  return a.modality_count == b.modality_count && a.a1 == b.a1 && a.a2 == b.a2;
}

ModalityMask block_indicator(const ModalityLayout& layout,
                             std::span<const std::size_t> modalities) {
  ModalityMask mask{std::vector<double>(layout.total_dim(), 0.0)};
  for (auto m : modalities) {
    if (m >= layout.modality_count()) {
      throw ConfigError("modality index out of range");
    }
    std::fill_n(mask.values.begin() + static_cast<std::ptrdiff_t>(layout.offset(m)),
                layout.latent_dim(m), 1.0);
  }
  return mask;
}

ModalityMask build_mask(const ModalityLayout& layout,
                        const SubsetPartition& partition) {
  partition.validate();
  if (partition.modality_count != layout.modality_count()) {
    throw ConfigError("partition/layout modality count mismatch");
  }
  return block_indicator(layout, partition.a1);
}

MultiTimeVector build_multitime(const SubsetPartition& partition, double t,
                                double horizon) {
  partition.validate();
  if (!(t > 0.0) || t > horizon) {
    throw ConfigError("multi-time t must lie in (0, T]; got " +
                      std::to_string(t));
  }
  MultiTimeVector tau{std::vector<double>(partition.modality_count, 0.0)};
  for (auto i : partition.a1) tau.times[i] = t;
  return tau;
}

Tensor compose(const ModalityLayout& layout,
               std::span<const ModalityBlock> generated,
               std::span<const ModalityBlock> conditioning) {
  const std::size_t m = layout.modality_count();
  std::vector<const Tensor*> by_modality(m, nullptr);
  for (auto list : {generated, conditioning}) {
    for (const auto& b : list) {
      if (b.modality >= m) throw ConfigError("compose: modality out of range");
      if (by_modality[b.modality]) {
        throw ConfigError("compose: duplicate block for modality " +
                          std::to_string(b.modality));
      }
      by_modality[b.modality] = &b.values;
    }
  }
  std::vector<Tensor> blocks;
  blocks.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!by_modality[i]) {
      throw ConfigError("compose: missing block for modality " +
                        std::to_string(i));
    }
    blocks.push_back(*by_modality[i]);
  }
  return compose_all(layout, blocks);
}

Tensor compose_all(const ModalityLayout& layout,
                   std::span<const Tensor> blocks) {
  const std::size_t m = layout.modality_count();
  if (blocks.size() != m) {
    throw ConfigError("compose: expected " + std::to_string(m) +
                      " blocks, got " + std::to_string(blocks.size()));
  }
  const bool single = blocks[0].rank() == 1;
  const std::size_t n = single ? 1 : blocks[0].rows();
  const std::size_t d = layout.total_dim();
  Tensor joint = single ? Tensor({d}) : Tensor({n, d});
  for (std::size_t i = 0; i < m; ++i) {
    const Tensor& b = blocks[i];
    const std::size_t w = layout.latent_dim(i);
    if ((b.rank() == 1) != single || b.cols() != w || b.rows() != n) {
      throw ShapeError("compose: block " + std::to_string(i) + " has shape " +
                       shape_string(b.shape()) + ", expected width " +
                       std::to_string(w));
    }
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(b.data() + r * w, w,
                  joint.data() + r * d + layout.offset(i));
    }
  }
  return joint;
}

std::vector<Tensor> split(const ModalityLayout& layout, const Tensor& joint) {
  const std::size_t d = layout.total_dim();
  if (joint.cols() != d || joint.rank() > 2) {
    throw ShapeError("split: joint vector width " +
                     std::to_string(joint.cols()) + " != total_dim " +
                     std::to_string(d));
  }
  std::vector<Tensor> out;
  out.reserve(layout.modality_count());
  for (std::size_t i = 0; i < layout.modality_count(); ++i) {
    Tensor block = slice_cols(joint, layout.offset(i),
                              layout.offset(i) + layout.latent_dim(i));
    if (joint.rank() == 1) block = block.reshaped({layout.latent_dim(i)});
    out.push_back(std::move(block));
  }
  return out;
}

void add_layout(TensorArchive& archive, const ModalityLayout& layout) {
  std::vector<std::int64_t> dims, data_dims, names;
  for (const auto& s : layout.specs()) {
    dims.push_back(static_cast<std::int64_t>(s.latent_dim));
    data_dims.push_back(static_cast<std::int64_t>(s.data_dim));
    if (!names.empty()) names.push_back('\n');
    for (unsigned char c : s.name) names.push_back(c);
  }
  archive.add_integers("layout.dims", dims);
  archive.add_integers("layout.data_dims", data_dims);
  archive.add_integers("layout.names", names);
}

ModalityLayout load_layout(const TensorArchive& archive) {
  const auto dims = archive.get_integers("layout.dims");
  const auto data_dims = archive.get_integers("layout.data_dims");
  const auto name_bytes = archive.get_integers("layout.names");
  std::vector<std::string> names(1);
  for (auto c : name_bytes) {
    if (c == '\n') {
      names.emplace_back();
    } else {
      names.back().push_back(static_cast<char>(c));
    }
  }
  if (dims.size() != data_dims.size() || dims.size() != names.size()) {
    throw IoError("layout entries disagree on modality count");
  }
  std::vector<ModalitySpec> specs;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] <= 0 || data_dims[i] <= 0) {
      throw IoError("layout has non-positive dims");
    }
    specs.push_back({names[i], static_cast<std::size_t>(data_dims[i]),
                     static_cast<std::size_t>(dims[i])});
  }
  return ModalityLayout(std::move(specs));
}

}  // namespace mld
