#include "mld/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mld/error.hpp"

namespace mld {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw IoError("truncated archive: need " + std::to_string(n) +
                    " bytes at offset " + std::to_string(pos_) + ", have " +
                    std::to_string(remaining()));
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorArchive::add(std::string name, Tensor tensor) {
  if (contains(name)) throw IoError("duplicate archive entry '" + name + "'");
  entries_.push_back({std::move(name), std::move(tensor)});
}

void TensorArchive::add_integers(std::string name,
                                 const std::vector<std::int64_t>& values) {
  std::vector<double> data(values.begin(), values.end());
  add(std::move(name), Tensor::vector(std::move(data)));
}

void TensorArchive::add_scalar(std::string name, double value) {
  add(std::move(name), Tensor::vector({value}));
}

bool TensorArchive::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const Tensor& TensorArchive::get(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw IoError("archive has no entry '" + std::string(name) + "'");
}

std::vector<std::int64_t> TensorArchive::get_integers(
    std::string_view name) const {
  const Tensor& t = get(name);
  std::vector<std::int64_t> out;
  out.reserve(t.size());
  for (double v : t.values()) {
    if (!std::isfinite(v) || v != std::floor(v) || std::abs(v) > 9.0e15) {
      throw IoError("entry '" + std::string(name) +
                    "' holds a non-integer value");
    }
    out.push_back(static_cast<std::int64_t>(v));
  }
  return out;
}

double TensorArchive::get_scalar(std::string_view name) const {
  const Tensor& t = get(name);
  if (t.size() != 1) {
    throw IoError("entry '" + std::string(name) + "' is not a scalar");
  }
  return t[0];
}

std::vector<std::uint8_t> TensorArchive::serialize() const {
  Writer w;
  w.bytes(std::string_view(kArchiveMagic, 4));
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name);
    w.u32(static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) w.u64(d);
    for (double v : e.tensor.values()) w.f64(v);
  }
  return w.take();
}

TensorArchive TensorArchive::deserialize(
    const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::string magic = r.string(4);
  if (magic != std::string_view(kArchiveMagic, 4)) {
    throw IoError("bad archive magic (expected MMLD)");
  }
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion) {
    throw IoError("unsupported archive version " + std::to_string(version) +
                  " (expected " + std::to_string(kArchiveVersion) + ")");
  }
  const std::uint32_t count = r.u32();
  TensorArchive archive;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.string(name_len);
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    const std::size_t n = shape_product(shape);
    if (n > r.remaining() / 8) {
      throw IoError("truncated archive: tensor '" + name + "' payload");
    }
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    archive.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) {
    throw IoError("trailing bytes after archive payload");
  }
  return archive;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void TensorArchive::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto bytes = serialize();
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

TensorArchive TensorArchive::read(const std::filesystem::path& path) {
  try {
    return deserialize(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

bool operator==(const TensorArchive& a, const TensorArchive& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name) return false;
    const auto& ta = a.entries_[i].tensor;
    const auto& tb = b.entries_[i].tensor;
    if (ta.shape() != tb.shape()) return false;
    // Bitwise, so NaN payloads and signed zeros compare exactly.
    if (std::memcmp(ta.data(), tb.data(), ta.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

void add_mlp(TensorArchive& archive, const std::string& prefix,
             const MlpParams& params) {
  std::vector<std::int64_t> arch{static_cast<std::int64_t>(params.activation),
                                 static_cast<std::int64_t>(params.blocks.size())};
  for (const auto& b : params.blocks) {
    arch.push_back(static_cast<std::int64_t>(b.layers.size()));
    arch.push_back(b.residual ? 1 : 0);
    arch.push_back(b.activate_output ? 1 : 0);
  }
  archive.add_integers(prefix + ".arch", arch);
  const auto names = params.tensor_names(prefix);
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    archive.add(names[i], *tensors[i]);
  }
}

MlpParams load_mlp(const TensorArchive& archive, const std::string& prefix) {
  const auto arch = archive.get_integers(prefix + ".arch");
  if (arch.size() < 2) throw IoError(prefix + ".arch is malformed");
  MlpParams p;
  if (arch[0] < 0 || arch[0] > 3) {
    throw IoError(prefix + ".arch has unknown activation");
  }
  p.activation = static_cast<Activation>(arch[0]);
  const auto n_blocks = static_cast<std::size_t>(arch[1]);
  if (arch.size() != 2 + 3 * n_blocks) {
    throw IoError(prefix + ".arch length does not match block count");
  }
  std::size_t k = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    MlpBlock block;
    const auto n_layers = static_cast<std::size_t>(arch[2 + 3 * b]);
    block.residual = arch[3 + 3 * b] != 0;
    block.activate_output = arch[4 + 3 * b] != 0;
    for (std::size_t i = 0; i < n_layers; ++i, ++k) {
      const std::string base = prefix + ".layer" + std::to_string(k);
      block.layers.push_back(
          Linear{archive.get(base + ".w"), archive.get(base + ".b")});
    }
    p.blocks.push_back(std::move(block));
  }
  try {
    p.validate();
  } catch (const ShapeError& e) {
    throw IoError(prefix + ": " + e.what());
  }
  return p;
}

}  // namespace mld
