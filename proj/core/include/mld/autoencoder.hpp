#pragma once

#include <cstdint>
#include <vector>

#include "mld/mlp.hpp"
#include "mld/modality.hpp"
#include "mld/optim.hpp"

namespace mld {

class TensorArchive;

// Deterministic encoder/decoder for one modality.
struct AutoencoderPair {
  ModalitySpec spec;
  MlpParams encoder;  // data_dim -> latent_dim
  MlpParams decoder;  // latent_dim -> data_dim
};

struct AutoencoderConfig {
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::kSilu;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AutoencoderTrainLog {
  std::vector<double> epoch_loss;  // mean squared error per epoch
};

AutoencoderPair make_autoencoder(const ModalitySpec& spec,
                                 const AutoencoderConfig& config, Rng& rng);

struct ReconstructionGradients {
  double loss = 0.0;  // mean over batch and data dims of squared error
  MlpParams encoder;
  MlpParams decoder;
};

ReconstructionGradients reconstruction_gradients(const AutoencoderPair& pair,
                                                 const Tensor& batch);
double reconstruction_loss(const AutoencoderPair& pair, const Tensor& data);

// Minimizes the modality's squared reconstruction error with Adam. Only
// `data` ([n, data_dim]) is read; no other modality is involved.
AutoencoderPair train_autoencoder(const ModalitySpec& spec, const Tensor& data,
                                  const AutoencoderConfig& config,
                                  AutoencoderTrainLog* log = nullptr);

// Per-dimension standardization of encoded latents, frozen after fitting.
struct LatentNormalizer {
  std::vector<double> mean;
  std::vector<double> std;

  Tensor normalize(const Tensor& z) const;
  Tensor denormalize(const Tensor& z) const;
};

inline constexpr double kNormalizerStdFloor = 1e-6;

// Mean and (population) std of the encoded batch; std floored at 1e-6.
LatentNormalizer fit_normalizer(const AutoencoderPair& pair,
                                const Tensor& first_batch);

Tensor encode(const AutoencoderPair& pair, const LatentNormalizer& norm,
              const Tensor& x);
Tensor decode(const AutoencoderPair& pair, const LatentNormalizer& norm,
              const Tensor& z_normalized);

// Stores "encoder.*", "decoder.*", "norm.mean", "norm.std" and the spec as
// "modality.name" (bytes) / "modality.dims" ([data_dim, latent_dim]).
TensorArchive autoencoder_archive(const AutoencoderPair& pair,
                                  const LatentNormalizer& norm);
void load_autoencoder(const TensorArchive& archive, AutoencoderPair& pair,
                      LatentNormalizer& norm);

}  // namespace mld
