#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mld/autoencoder.hpp"
#include "mld/diffusion.hpp"
#include "mld/score_network.hpp"

namespace mld {

// Everything a denoising loss evaluation needs, fully materialized so the
// loss is a deterministic function of its inputs.
struct DenoisingBatch {
  Tensor clean;        // [n, D] normalized joint latents Z
  Tensor times;        // [n, M] per-sample, per-modality diffusion times
  Tensor noise;        // [n, D] standard normal draws
  ModalityMask mask;   // 1 on diffused coordinates
  double omega = 1.0;  // loss weight
};

struct DenoisingResult {
  double loss = 0.0;
  MlpParams grads;
  Tensor state;  // the diffused, masked state fed to the network
};

// Masked-diffusion batch: blocks in a1 are diffused to t_n (one time per
// sample), blocks in a2 are copied from `clean` and get time 0.
DenoisingBatch make_masked_batch(const DiffusionConfig& config,
                                 const ModalityLayout& layout,
                                 const Tensor& clean,
                                 const SubsetPartition& partition,
                                 std::span<const double> sample_times,
                                 Tensor noise);
// Uni-diffuser batch: every block diffused at its own time, no mask.
DenoisingBatch make_unidiffuser_batch(const ModalityLayout& layout,
                                      const Tensor& clean, Tensor times,
                                      Tensor noise);

// Loss = omega * mean_n sum_j mask_j (eps_hat_j - eps_j)^2 / D, the
// noise-prediction form of the masked score-matching objective.
DenoisingResult denoising_loss(const ScoreNetwork& net,
                               const DiffusionConfig& config,
                               const DenoisingBatch& batch);

struct TrainingBatchOutcome {
  SubsetPartition partition;
  std::vector<double> times;  // per-sample t (multi-time) or flattened [n*M]
  double t = 0.0;             // mean of `times`
  double loss = 0.0;
  double omega = 1.0;
  double grad_norm = 0.0;
};

// One masked multi-time step on a batch of normalized joint latents:
// A2 ~ nu, t_n ~ U[t_eps, T], masked diffusion, omega-weighted masked loss,
// Adam + EMA update. Throws NumericError (and leaves the network untouched)
// on a non-finite loss.
TrainingBatchOutcome training_step(const DiffusionConfig& config,
                                   ScoreNetwork& net, const Tensor& latents,
                                   Rng& rng);

// Same step starting from raw modality data: encodes each modality with its
// autoencoder and normalizer first.
TrainingBatchOutcome training_step(const DiffusionConfig& config,
                                   ScoreNetwork& net,
                                   std::span<const AutoencoderPair> autoencoders,
                                   std::span<const LatentNormalizer> normalizers,
                                   std::span<const Tensor> batch, Rng& rng);

// Every block diffused at an independent time t^i ~ U[t_eps, T]; no mask,
// omega = 1.
TrainingBatchOutcome unidiffuser_training_step(const DiffusionConfig& config,
                                               ScoreNetwork& net,
                                               const Tensor& latents, Rng& rng);

struct ScoreTrainingOptions {
  ScoreTrainingMode mode = ScoreTrainingMode::kMultiTime;
  std::size_t steps = 1000;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  // Called after every step with the step index.
  std::function<void(std::size_t, const TrainingBatchOutcome&)> on_step;
};

// Runs `steps` training steps over minibatches drawn with replacement from
// `latents` ([N, D], normalized). Unconditional mode pins d = 1.
void train_score_network(const DiffusionConfig& config, ScoreNetwork& net,
                         const Tensor& latents,
                         const ScoreTrainingOptions& options);

// Encodes all modalities and concatenates them into [n, D].
Tensor encode_joint(std::span<const AutoencoderPair> autoencoders,
                    std::span<const LatentNormalizer> normalizers,
                    std::span<const Tensor> data);

}  // namespace mld
