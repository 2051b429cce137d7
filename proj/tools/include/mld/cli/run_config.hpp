#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mld/autoencoder.hpp"
#include "mld/data.hpp"
#include "mld/diffusion.hpp"
#include "mld/eval.hpp"
#include "mld/sampler.hpp"
#include "mld/score_network.hpp"

namespace mld::cli {

struct ScoreTrainingConfig {
  std::size_t steps = 4000;
  std::size_t batch_size = 256;
};

struct EvalConfig {
  // Held-out samples used for conditioning and as the Frechet reference.
  std::size_t samples = 500;
  // Sample stream of the held-out split (see SyntheticConfig::sample_stream).
  std::uint64_t test_stream = 1;
  std::vector<double> robustness_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                      0.6, 0.7, 0.8, 0.9, 1.0};
};

// Everything one pipeline run needs. The per-stage seeds inside the nested
// configs are derived from `seed` by derive_seeds().
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path workdir = "mld_run";
  SyntheticConfig data;
  std::vector<std::size_t> latent_dims;  // one per data modality
  AutoencoderConfig autoencoder;
  ClassifierConfig classifier;
  DiffusionConfig diffusion;
  ScoreNetConfig score;
  ScoreTrainingConfig score_training;
  SamplerConfig sampler;
  EvalConfig eval;

  std::vector<ModalitySpec> modality_specs() const;
  ModalityLayout layout() const;
  // Re-checks every nested invariant; throws ConfigError naming the key.
  void validate() const;
};

// Writes mix_seed(seed, stage) into data, autoencoder, classifier, score
// and sampler configs, plus the seed of eval-time sampling.
void derive_seeds(RunConfig& config);
std::uint64_t eval_seed(const RunConfig& config);

RunConfig parse_run_config(const std::string& text);
// Reads the file, applies environment overrides, validates and derives the
// stage seeds.
RunConfig load_run_config(const std::filesystem::path& path);

// MLD_SEED replaces the seed and MLD_WORKDIR the working directory.
void apply_env_overrides(RunConfig& config);

}  // namespace mld::cli
