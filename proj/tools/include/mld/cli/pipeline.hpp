#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mld/cli/run_config.hpp"
#include "mld/training.hpp"

namespace mld::cli {

enum class SampleMethod { kMultiTime, kInpaint };

const char* method_name(SampleMethod method);
SampleMethod method_from_name(const std::string& name);

// Trained per-modality autoencoders and their frozen normalizers.
struct AutoencoderSet {
  std::vector<AutoencoderPair> pairs;
  std::vector<LatentNormalizer> normalizers;

  ModalityLayout layout() const;
};

// Throws ConfigError when the dataset's modalities disagree with the config.
void check_dataset(const RunConfig& config, const MultiModalDataset& data);

// Training split (stream 0) and held-out split as configured.
MultiModalDataset generate_train_split(const RunConfig& config);
MultiModalDataset generate_test_split(const RunConfig& config);

// Each modality trains on its own columns only; the normalizer is fitted on
// the encoded first batch (the first batch_size rows).
AutoencoderSet train_autoencoders(const RunConfig& config,
                                  const MultiModalDataset& data,
                                  std::vector<AutoencoderTrainLog>* logs = nullptr);

std::filesystem::path autoencoder_path(const std::filesystem::path& dir,
                                       const std::string& modality);
void save_autoencoders(const AutoencoderSet& set, const std::filesystem::path& dir);
AutoencoderSet load_autoencoders(const RunConfig& config,
                                 const std::filesystem::path& dir);

using ScoreStepCallback =
    std::function<void(std::size_t, const TrainingBatchOutcome&)>;

ScoreNetwork train_score(const RunConfig& config, const DiffusionConfig& diffusion,
                         const AutoencoderSet& autoencoders,
                         const MultiModalDataset& data, ScoreTrainingMode mode,
                         const ScoreStepCallback& on_step = {});

std::vector<TinyClassifier> train_classifiers(const RunConfig& config,
                                              const MultiModalDataset& data);
void save_classifiers(const std::vector<TinyClassifier>& classifiers,
                      const std::vector<std::string>& names,
                      const std::filesystem::path& path);
std::vector<TinyClassifier> load_classifiers(const std::vector<std::string>& names,
                                             const std::filesystem::path& path);

// Joint generation when `conditioning` is empty, otherwise conditional
// generation with the chosen method. Conditioning latents are normalized,
// one block per conditioning modality ([count, dim] or [dim]). Returns the
// joint latent [count, D].
Tensor sample_latents(const DiffusionConfig& diffusion,
                      const SamplerConfig& sampler, const ScoreNetwork& net,
                      SampleMethod method,
                      const std::map<std::size_t, Tensor>& conditioning,
                      std::size_t count);

// Decodes every modality block of a joint latent.
std::vector<Tensor> decode_all(const AutoencoderSet& autoencoders,
                               const Tensor& joint);

struct EvalRow {
  std::string metric;
  std::string modality;
  std::string condition_set;
  double value = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  SampleMethod method = SampleMethod::kMultiTime;
  bool robustness = true;
  bool frechet = true;
};

// Joint coherence, conditional coherence for every nonempty proper
// conditioning set, Frechet distances of joint samples against the held-out
// data, and the robustness scan.
std::vector<EvalRow> evaluate(const RunConfig& config,
                              const DiffusionConfig& diffusion,
                              const AutoencoderSet& autoencoders,
                              const ScoreNetwork& net,
                              const std::vector<TinyClassifier>& classifiers,
                              const MultiModalDataset& test,
                              const EvalOptions& options);

// Names the conditioning set, e.g. "a+b".
std::string condition_set_name(const ModalityLayout& layout,
                               const std::vector<std::size_t>& modalities);

void write_eval_csv(const std::vector<EvalRow>& rows,
                    const std::filesystem::path& path);

// Draws a 2-D point cloud as a size x size 8-bit PGM, ink = dark.
void write_scatter_pgm(const Tensor& points, const std::filesystem::path& path,
                       std::size_t size = 256);

}  // namespace mld::cli
