#include "mld/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "mld/checkpoint.hpp"
#include "mld/error.hpp"

namespace mld {

ModalityDataConfig ModalityDataConfig::hard(std::string name,
                                            std::size_t data_dim) {
  ModalityDataConfig c;
  c.name = std::move(name);
  c.data_dim = data_dim;
  c.noise_scale = 0.25;
  c.nuisance_dims = data_dim / 2;
  c.nuisance_scale = 0.5;
  return c;
}

void SyntheticConfig::validate() const {
  if (classes == 0) throw ConfigError("data.classes must be >= 1");
  if (samples_per_class == 0) {
    throw ConfigError("data.samples_per_class must be >= 1");
  }
  if (modalities.empty()) throw ConfigError("data.modalities must not be empty");
  std::set<std::string> names;
  for (const auto& m : modalities) {
    if (m.name.empty()) throw ConfigError("data modality name is empty");
    if (!names.insert(m.name).second) {
      throw ConfigError("duplicate data modality '" + m.name + "'");
    }
    if (m.data_dim < 2 || m.nuisance_dims + 2 > m.data_dim) {
      throw ConfigError("data modality '" + m.name +
                        "' needs at least 2 signal dims");
    }
    if (m.noise_scale < 0.0 || m.nuisance_scale < 0.0 || !(m.radius > 0.0)) {
      throw ConfigError("data modality '" + m.name +
                        "' has a negative scale or non-positive radius");
    }
  }
}

std::size_t MultiModalDataset::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ConfigError("dataset has no modality '" + name + "'");
}

void MultiModalDataset::validate() const {
  if (names.size() != modalities.size() || pairing.size() != modalities.size()) {
    throw IoError("dataset modality tables disagree in length");
  }
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    if (modalities[m].rank() != 2 || modalities[m].rows() != labels.size() ||
        pairing[m].size() != labels.size()) {
      throw IoError("dataset modality '" + names[m] +
                    "' is not aligned with the labels");
    }
  }
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw IoError("dataset label " + std::to_string(y) + " outside [0, " +
                    std::to_string(classes) + ")");
    }
  }
}

namespace {

struct ModalityGeometry {
  std::vector<double> axis_u;  // orthonormal pair spanning the class circle
  std::vector<double> axis_v;
  double phase = 0.0;
};

ModalityGeometry make_geometry(const ModalityDataConfig& c, Rng& rng) {
  const std::size_t s = c.signal_dims();
  ModalityGeometry g;
  g.axis_u.resize(s);
  g.axis_v.resize(s);
  for (auto& v : g.axis_u) v = rng.normal();
  for (auto& v : g.axis_v) v = rng.normal();
  auto normalize = [](std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
  };
  normalize(g.axis_u);
  double proj = 0.0;
  for (std::size_t i = 0; i < s; ++i) proj += g.axis_u[i] * g.axis_v[i];
  for (std::size_t i = 0; i < s; ++i) g.axis_v[i] -= proj * g.axis_u[i];
  normalize(g.axis_v);
  g.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return g;
}

// Geometry for every modality, drawn from a stream separate from the
// sample noise so templates depend only on the seed and modality list.
std::vector<ModalityGeometry> make_geometries(const SyntheticConfig& config) {
  Rng rng(mix_seed(config.seed, 1));
  std::vector<ModalityGeometry> out;
  for (const auto& m : config.modalities) out.push_back(make_geometry(m, rng));
  return out;
}

void write_template(const ModalityDataConfig& c, const ModalityGeometry& g,
                    std::size_t cls, std::size_t classes, double* out) {
  const double angle =
      2.0 * std::numbers::pi * static_cast<double>(cls) /
          static_cast<double>(classes) + g.phase;
  const double x = c.radius * std::cos(angle);
  const double y = c.radius * std::sin(angle);
  for (std::size_t i = 0; i < c.signal_dims(); ++i) {
    out[i] = x * g.axis_u[i] + y * g.axis_v[i];
  }
  for (std::size_t i = c.signal_dims(); i < c.data_dim; ++i) out[i] = 0.0;
}

}  // namespace

Tensor class_templates(const SyntheticConfig& config, std::size_t modality) {
  config.validate();
  const auto geoms = make_geometries(config);
  const auto& c = config.modalities.at(modality);
  Tensor t({config.classes, c.data_dim});
  for (std::size_t k = 0; k < config.classes; ++k) {
    write_template(c, geoms[modality], k, config.classes, t.data() + k * c.data_dim);
  }
  return t;
}

MultiModalDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const auto geoms = make_geometries(config);
  const std::size_t n = config.classes * config.samples_per_class;
  Rng rng(mix_seed(config.seed, 2 + config.sample_stream));

  MultiModalDataset data;
  data.classes = config.classes;
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = static_cast<std::int64_t>(i % config.classes);
  }
  std::shuffle(data.labels.begin(), data.labels.end(), rng.engine());

  for (std::size_t m = 0; m < config.modalities.size(); ++m) {
    const auto& c = config.modalities[m];
    Tensor x({n, c.data_dim});
    for (std::size_t i = 0; i < n; ++i) {
      double* row = x.data() + i * c.data_dim;
      write_template(c, geoms[m], static_cast<std::size_t>(data.labels[i]),
                     config.classes, row);
      for (std::size_t j = 0; j < c.signal_dims(); ++j) {
        row[j] += c.noise_scale * rng.normal();
      }
      for (std::size_t j = c.signal_dims(); j < c.data_dim; ++j) {
        row[j] = c.nuisance_scale * rng.normal();
      }
    }
    data.names.push_back(c.name);
    data.modalities.push_back(std::move(x));
    std::vector<std::int64_t> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    data.pairing.push_back(std::move(identity));
  }
  return data;
}

MultiModalDataset pair_by_label(const MultiModalDataset& a,
                                const MultiModalDataset& b,
                                std::size_t k_pairs, Rng& rng) {
  a.validate();
  b.validate();
  if (k_pairs == 0) throw ConfigError("pair_by_label: k_pairs must be >= 1");
  if (a.classes != b.classes) {
    throw ConfigError("pair_by_label: datasets disagree on class count");
  }
  std::vector<std::vector<std::size_t>> pools(b.classes);
  for (std::size_t i = 0; i < b.size(); ++i) {
    pools[static_cast<std::size_t>(b.labels[i])].push_back(i);
  }
  for (auto y : a.labels) {
    if (pools[static_cast<std::size_t>(y)].empty()) {
      throw ConfigError("pair_by_label: class " + std::to_string(y) +
                        " absent from the second dataset");
    }
  }
  for (auto& p : pools) std::shuffle(p.begin(), p.end(), rng.engine());
  std::vector<std::size_t> cursor(b.classes, 0);

  std::vector<std::size_t> rows_a, rows_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto y = static_cast<std::size_t>(a.labels[i]);
    auto& pool = pools[y];
    for (std::size_t k = 0; k < k_pairs; ++k) {
      if (cursor[y] == pool.size()) {
        std::shuffle(pool.begin(), pool.end(), rng.engine());
        cursor[y] = 0;
      }
      rows_a.push_back(i);
      rows_b.push_back(pool[cursor[y]++]);
    }
  }
  MultiModalDataset out = subset(a, rows_a);
  const MultiModalDataset right = subset(b, rows_b);
  for (std::size_t m = 0; m < right.modality_count(); ++m) {
    out.names.push_back(right.names[m]);
    out.modalities.push_back(right.modalities[m]);
    out.pairing.push_back(right.pairing[m]);
  }
  std::set<std::string> unique(out.names.begin(), out.names.end());
  if (unique.size() != out.names.size()) {
    throw ConfigError("pair_by_label: modality names collide");
  }
  return out;
}

MultiModalDataset subset(const MultiModalDataset& data,
                         const std::vector<std::size_t>& rows) {
  MultiModalDataset out;
  out.classes = data.classes;
  out.names = data.names;
  for (auto r : rows) out.labels.push_back(data.labels.at(r));
  for (std::size_t m = 0; m < data.modality_count(); ++m) {
    out.modalities.push_back(gather_rows(data.modalities[m], rows));
    std::vector<std::int64_t> src;
    for (auto r : rows) src.push_back(data.pairing[m].at(r));
    out.pairing.push_back(std::move(src));
  }
  return out;
}

void save_dataset(const MultiModalDataset& data,
                  const std::filesystem::path& path) {
  data.validate();
  TensorArchive archive;
  archive.add_scalar("dataset.classes", static_cast<double>(data.classes));
  std::vector<std::int64_t> names;
  for (std::size_t m = 0; m < data.names.size(); ++m) {
    if (m) names.push_back('\n');
    for (unsigned char c : data.names[m]) names.push_back(c);
  }
  archive.add_integers("dataset.names", names);
  for (std::size_t m = 0; m < data.modality_count(); ++m) {
    archive.add("data." + data.names[m], data.modalities[m]);
  }
  archive.add_integers("labels", data.labels);
  const std::size_t n = data.size();
  const std::size_t mm = data.modality_count();
  Tensor pairing({n, mm});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < mm; ++m) {
      pairing.at(i, m) = static_cast<double>(data.pairing[m][i]);
    }
  }
  archive.add("pairing", std::move(pairing));
  archive.write(path);
}

MultiModalDataset load_dataset(const std::filesystem::path& path) {
  const TensorArchive archive = TensorArchive::read(path);
  MultiModalDataset data;
  const double classes = archive.get_scalar("dataset.classes");
  if (!(classes >= 0.0) || classes != std::floor(classes)) {
    throw IoError("dataset.classes is malformed");
  }
  data.classes = static_cast<std::size_t>(classes);
  const auto name_bytes = archive.get_integers("dataset.names");
  if (!name_bytes.empty()) {
    data.names.emplace_back();
    for (auto c : name_bytes) {
      if (c == '\n') {
        data.names.emplace_back();
      } else {
        data.names.back().push_back(static_cast<char>(c));
      }
    }
  }
  for (const auto& name : data.names) {
    data.modalities.push_back(archive.get("data." + name));
  }
  data.labels = archive.get_integers("labels");
  const auto pairing = archive.get_integers("pairing");
  const std::size_t n = data.labels.size();
  const std::size_t mm = data.names.size();
  if (pairing.size() != n * mm) throw IoError("pairing table is malformed");
  data.pairing.assign(mm, std::vector<std::int64_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < mm; ++m) data.pairing[m][i] = pairing[i * mm + m];
  }
  data.validate();
  return data;
}

}  // namespace mld
