#include "mld/cli/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "mld/checkpoint.hpp"
#include "mld/error.hpp"

namespace mld::cli {

const char* method_name(SampleMethod method) {
  return method == SampleMethod::kInpaint ? "inpaint" : "multitime";
}

SampleMethod method_from_name(const std::string& name) {
  if (name == "multitime") return SampleMethod::kMultiTime;
  if (name == "inpaint") return SampleMethod::kInpaint;
  throw ConfigError("unknown sampling method '" + name +
                    "' (expected multitime or inpaint)");
}

ModalityLayout AutoencoderSet::layout() const {
  std::vector<ModalitySpec> specs;
  for (const auto& p : pairs) specs.push_back(p.spec);
  return ModalityLayout(std::move(specs));
}

void check_dataset(const RunConfig& config, const MultiModalDataset& data) {
  data.validate();
  const auto specs = config.modality_specs();
  if (data.modality_count() != specs.size()) {
    throw ConfigError("dataset has " + std::to_string(data.modality_count()) +
                      " modalities, config data.modalities has " +
                      std::to_string(specs.size()));
  }
  for (std::size_t m = 0; m < specs.size(); ++m) {
    if (data.names[m] != specs[m].name ||
        data.modalities[m].cols() != specs[m].data_dim) {
      throw ConfigError("dataset modality '" + data.names[m] +
                        "' does not match data.modalities[" +
                        std::to_string(m) + "]");
    }
  }
  if (data.classes != config.data.classes) {
    throw ConfigError("dataset class count differs from data.classes");
  }
}

MultiModalDataset generate_train_split(const RunConfig& config) {
  auto sc = config.data;
  sc.sample_stream = 0;
  return generate_synthetic(sc);
}

MultiModalDataset generate_test_split(const RunConfig& config) {
  auto sc = config.data;
  sc.sample_stream = config.eval.test_stream;
  sc.samples_per_class = (config.eval.samples + sc.classes - 1) / sc.classes;
  auto full = generate_synthetic(sc);
  std::vector<std::size_t> rows(config.eval.samples);
  std::iota(rows.begin(), rows.end(), 0);
  return subset(full, rows);
}

AutoencoderSet train_autoencoders(const RunConfig& config,
                                  const MultiModalDataset& data,
                                  std::vector<AutoencoderTrainLog>* logs) {
  check_dataset(config, data);
  const auto specs = config.modality_specs();
  AutoencoderSet set;
  if (logs) logs->clear();
  for (std::size_t m = 0; m < specs.size(); ++m) {
    auto ac = config.autoencoder;
    ac.seed = mix_seed(config.autoencoder.seed, m);
    AutoencoderTrainLog log;
    auto pair = train_autoencoder(specs[m], data.modalities[m], ac, &log);
    const std::size_t first = std::min(ac.batch_size, data.size());
    std::vector<std::size_t> rows(first);
    std::iota(rows.begin(), rows.end(), 0);
    set.normalizers.push_back(
        fit_normalizer(pair, gather_rows(data.modalities[m], rows)));
    set.pairs.push_back(std::move(pair));
    if (logs) logs->push_back(std::move(log));
  }
  return set;
}

std::filesystem::path autoencoder_path(const std::filesystem::path& dir,
                                       const std::string& modality) {
  return dir / ("ae_" + modality + ".mmld");
}

void save_autoencoders(const AutoencoderSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t m = 0; m < set.pairs.size(); ++m) {
    autoencoder_archive(set.pairs[m], set.normalizers[m])
        .write(autoencoder_path(dir, set.pairs[m].spec.name));
  }
}

AutoencoderSet load_autoencoders(const RunConfig& config,
                                 const std::filesystem::path& dir) {
  AutoencoderSet set;
  for (const auto& spec : config.modality_specs()) {
    AutoencoderPair pair;
    LatentNormalizer norm;
    load_autoencoder(TensorArchive::read(autoencoder_path(dir, spec.name)), pair, norm);
    if (!(pair.spec == spec)) {
      throw ConfigError("autoencoder checkpoint for '" + spec.name +
                        "' does not match the configured dims");
    }
    set.pairs.push_back(std::move(pair));
    set.normalizers.push_back(std::move(norm));
  }
  return set;
}

ScoreNetwork train_score(const RunConfig& config, const DiffusionConfig& diffusion,
                         const AutoencoderSet& autoencoders,
                         const MultiModalDataset& data, ScoreTrainingMode mode,
                         const ScoreStepCallback& on_step) {
  check_dataset(config, data);
  const Tensor latents =
      encode_joint(autoencoders.pairs, autoencoders.normalizers, data.modalities);
  ScoreNetwork net(autoencoders.layout(), config.score);
  ScoreTrainingOptions opt;
  opt.mode = mode;
  opt.steps = config.score_training.steps;
  opt.batch_size = config.score_training.batch_size;
  opt.seed = mix_seed(config.score.seed, 1);
  opt.on_step = on_step;
  train_score_network(diffusion, net, latents, opt);
  return net;
}

std::vector<TinyClassifier> train_classifiers(const RunConfig& config,
                                              const MultiModalDataset& data) {
  check_dataset(config, data);
  std::vector<TinyClassifier> out;
  for (std::size_t m = 0; m < data.modality_count(); ++m) {
    auto cc = config.classifier;
    cc.seed = mix_seed(config.classifier.seed, m);
    out.push_back(train_classifier(data.modalities[m], data.labels, data.classes, cc));
  }
  return out;
}

void save_classifiers(const std::vector<TinyClassifier>& classifiers,
                      const std::vector<std::string>& names,
                      const std::filesystem::path& path) {
  TensorArchive ar;
  for (std::size_t m = 0; m < classifiers.size(); ++m) {
    add_mlp(ar, "clf." + names.at(m), classifiers[m].net);
    ar.add_scalar("clf." + names[m] + ".classes",
                  static_cast<double>(classifiers[m].classes));
  }
  ar.write(path);
}

std::vector<TinyClassifier> load_classifiers(const std::vector<std::string>& names,
                                             const std::filesystem::path& path) {
  const auto ar = TensorArchive::read(path);
  std::vector<TinyClassifier> out;
  for (const auto& name : names) {
    TinyClassifier c;
    c.net = load_mlp(ar, "clf." + name);
    c.classes = static_cast<std::size_t>(ar.get_scalar("clf." + name + ".classes"));
    if (c.net.out_dim() != c.classes) {
      throw IoError("classifier '" + name + "' output width disagrees with its class count");
    }
    out.push_back(std::move(c));
  }
  return out;
}

Tensor sample_latents(const DiffusionConfig& diffusion,
                      const SamplerConfig& sampler, const ScoreNetwork& net,
                      SampleMethod method,
                      const std::map<std::size_t, Tensor>& conditioning,
                      std::size_t count) {
  const auto& layout = net.layout();
  const auto score = network_score_fn(net, diffusion);
  if (conditioning.empty()) {
    return joint_generate(diffusion, sampler, score, layout, count);
  }
  if (method == SampleMethod::kMultiTime &&
      net.trained_mode() == ScoreTrainingMode::kUnconditional) {
    throw ConfigError(
        "score network was trained unconditionally; conditional sampling "
        "needs --method inpaint");
  }
  std::vector<std::size_t> cond_idx;
  std::vector<ModalityBlock> blocks;
  for (const auto& [m, values] : conditioning) {
    if (m >= layout.modality_count()) {
      throw ConfigError("conditioning modality index out of range");
    }
    cond_idx.push_back(m);
    blocks.push_back({m, values});
  }
  const auto partition =
      SubsetPartition::from_conditioning(layout.modality_count(), cond_idx);
  if (method == SampleMethod::kInpaint) {
    return inpaint_conditional_generate(diffusion, sampler, score, layout,
                                        partition, blocks, count);
  }
  return conditional_generate(diffusion, sampler, score, layout, partition,
                              blocks, count);
}

std::vector<Tensor> decode_all(const AutoencoderSet& autoencoders,
                               const Tensor& joint) {
  const auto blocks = split(autoencoders.layout(), joint);
  std::vector<Tensor> out;
  for (std::size_t m = 0; m < blocks.size(); ++m) {
    out.push_back(decode(autoencoders.pairs[m], autoencoders.normalizers[m], blocks[m]));
  }
  return out;
}

std::string condition_set_name(const ModalityLayout& layout,
                               const std::vector<std::size_t>& modalities) {
  if (modalities.empty()) return "none";
  std::string s;
  for (auto m : modalities) {
    if (!s.empty()) s += "+";
    s += layout.spec(m).name;
  }
  return s;
}

std::vector<EvalRow> evaluate(const RunConfig& config,
                              const DiffusionConfig& diffusion,
                              const AutoencoderSet& autoencoders,
                              const ScoreNetwork& net,
                              const std::vector<TinyClassifier>& classifiers,
                              const MultiModalDataset& test,
                              const EvalOptions& options) {
  check_dataset(config, test);
  const auto layout = autoencoders.layout();
  const std::size_t m_count = layout.modality_count();
  const std::size_t n = test.size();
  const std::uint64_t seed = eval_seed(config);
  std::vector<EvalRow> rows;
  auto emit = [&](std::string metric, std::string modality, std::string cond,
                  double value, std::size_t count) {
    rows.push_back({std::move(metric), std::move(modality), std::move(cond),
                    value, count, seed});
  };

  SamplerConfig sampler = config.sampler;
  sampler.seed = mix_seed(seed, 0);
  const auto joint = decode_all(
      autoencoders, sample_latents(diffusion, sampler, net, options.method, {}, n));
  emit("joint_coherence", "all", "none", joint_coherence(classifiers, joint), n);
  if (options.frechet) {
    for (std::size_t m = 0; m < m_count; ++m) {
      const auto real = gaussian_stats(embed(classifiers[m], test.modalities[m]));
      const auto gen = gaussian_stats(embed(classifiers[m], joint[m]));
      emit("frechet", layout.spec(m).name, "none", frechet_distance(real, gen), n);
    }
  }

  const Tensor test_latents =
      encode_joint(autoencoders.pairs, autoencoders.normalizers, test.modalities);
  const auto test_blocks = split(layout, test_latents);
  // Every nonempty proper subset as the conditioning set.
  for (std::uint64_t bits = 1; bits + 1 < (std::uint64_t{1} << m_count); ++bits) {
    std::vector<std::size_t> cond;
    std::map<std::size_t, Tensor> blocks;
    for (std::size_t m = 0; m < m_count; ++m) {
      if (bits & (std::uint64_t{1} << m)) {
        cond.push_back(m);
        blocks.emplace(m, test_blocks[m]);
      }
    }
    sampler.seed = mix_seed(seed, bits);
    const auto generated = decode_all(
        autoencoders, sample_latents(diffusion, sampler, net, options.method, blocks, n));
    const auto cond_name = condition_set_name(layout, cond);
    for (std::size_t m = 0; m < m_count; ++m) {
      if (blocks.count(m)) continue;
      emit("conditional_coherence", layout.spec(m).name, cond_name,
           conditional_coherence(classifiers[m], generated[m], test.labels), n);
    }
  }

  if (options.robustness && !config.eval.robustness_grid.empty()) {
    Rng rng(mix_seed(seed, 1u << 20));
    const auto scan = robustness_scan(diffusion, autoencoders.pairs,
                                      autoencoders.normalizers, classifiers,
                                      test.modalities, test.labels,
                                      config.eval.robustness_grid, rng);
    for (const auto& point : scan) {
      char t[32];
      std::snprintf(t, sizeof t, "t=%g", point.t);
      for (std::size_t m = 0; m < m_count; ++m) {
        emit("robustness_coherence", layout.spec(m).name, t, point.coherence[m],
             point.samples);
      }
    }
  }
  return rows;
}

void write_eval_csv(const std::vector<EvalRow>& rows,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "metric,modality,condition_set,value,n_samples,seed\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.metric << ',' << r.modality << ',' << r.condition_set << ','
        << r.value << ',' << r.n_samples << ',' << r.seed << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_scatter_pgm(const Tensor& points, const std::filesystem::path& path,
                       std::size_t size) {
  if (points.rank() != 2 || points.cols() != 2) {
    throw ShapeError("scatter plot needs [n, 2] points");
  }
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    lo = std::min(lo, points.data()[i]);
    hi = std::max(hi, points.data()[i]);
  }
  const double pad = 0.05 * (hi - lo) + 1e-12;
  lo -= pad;
  hi += pad;
  std::vector<std::uint8_t> pixels(size * size, 255);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const double x = (points.at(i, 0) - lo) / (hi - lo);
    const double y = (points.at(i, 1) - lo) / (hi - lo);
    const auto px = static_cast<std::size_t>(x * static_cast<double>(size - 1));
    const auto py = static_cast<std::size_t>((1.0 - y) * static_cast<double>(size - 1));
    auto& p = pixels[py * size + px];
    p = p > 64 ? static_cast<std::uint8_t>(p - 64) : 0;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << size << ' ' << size << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace mld::cli
