#include "mld/training.hpp"

#include <cmath>
#include <numeric>

#include "mld/error.hpp"

namespace mld {

namespace {

// R = m * diffuse(Z, tau) + (1 - m) * Z, block by block.
Tensor masked_diffuse(const DiffusionConfig& config,
                      const ModalityLayout& layout, const DenoisingBatch& b) {
  const std::size_t n = b.clean.rows();
  const std::size_t d = layout.total_dim();
  Tensor state = b.clean;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < layout.modality_count(); ++i) {
      const auto k = kernel(config, b.times.at(r, i));
      const double s = k.std();
      const std::size_t off = layout.offset(i);
      for (std::size_t j = 0; j < layout.latent_dim(i); ++j) {
        const std::size_t idx = r * d + off + j;
        if (b.mask.values[off + j] != 0.0) {
          state[idx] = k.mean_coeff * b.clean[idx] + s * b.noise[idx];
        } else {
          state[idx] = b.clean[idx];
        }
      }
    }
  }
  return state;
}

void check_latents(const ScoreNetwork& net, const Tensor& latents) {
  if (latents.rank() != 2 || latents.cols() != net.layout().total_dim()) {
    throw ShapeError("latent batch must be [n, " +
                     std::to_string(net.layout().total_dim()) + "], got " +
                     shape_string(latents.shape()));
  }
  if (latents.rows() == 0) throw ConfigError("empty latent batch");
}

TrainingBatchOutcome apply(ScoreNetwork& net, const DiffusionConfig& config,
                           const DenoisingBatch& batch,
                           TrainingBatchOutcome outcome) {
  auto result = denoising_loss(net, config, batch);
  if (!std::isfinite(result.loss)) {
    throw NumericError("score training: non-finite loss");
  }
  outcome.loss = result.loss;
  outcome.omega = batch.omega;
  outcome.grad_norm = gradient_norm(result.grads);
  if (!std::isfinite(outcome.grad_norm)) {
    throw NumericError("score training: non-finite gradient");
  }
  net.apply_gradients(result.grads);
  return outcome;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0
                   : std::accumulate(v.begin(), v.end(), 0.0) /
                         static_cast<double>(v.size());
}

}  // namespace

DenoisingBatch make_masked_batch(const DiffusionConfig& config,
                                 const ModalityLayout& layout,
                                 const Tensor& clean,
                                 const SubsetPartition& partition,
                                 std::span<const double> sample_times,
                                 Tensor noise) {
  const std::size_t n = clean.rows();
  if (sample_times.size() != n) {
    throw ShapeError("make_masked_batch: one time per sample required");
  }
  if (noise.shape() != clean.shape()) {
    throw ShapeError("make_masked_batch: noise shape mismatch");
  }
  DenoisingBatch b;
  b.clean = clean;
  b.noise = std::move(noise);
  b.mask = build_mask(layout, partition);
  b.omega = omega(layout, partition);
  b.times = Tensor({n, layout.modality_count()});
  for (std::size_t r = 0; r < n; ++r) {
    const auto tau = build_multitime(partition, sample_times[r], config.horizon);
    std::copy(tau.times.begin(), tau.times.end(),
              b.times.data() + r * layout.modality_count());
  }
  return b;
}

DenoisingBatch make_unidiffuser_batch(const ModalityLayout& layout,
                                      const Tensor& clean, Tensor times,
                                      Tensor noise) {
  const std::size_t n = clean.rows();
  if (times.rank() != 2 || times.rows() != n ||
      times.cols() != layout.modality_count()) {
    throw ShapeError("make_unidiffuser_batch: times must be [n, M]");
  }
  if (noise.shape() != clean.shape()) {
    throw ShapeError("make_unidiffuser_batch: noise shape mismatch");
  }
  DenoisingBatch b;
  b.clean = clean;
  b.times = std::move(times);
  b.noise = std::move(noise);
  b.mask.values.assign(layout.total_dim(), 1.0);
  b.omega = 1.0;
  return b;
}

DenoisingResult denoising_loss(const ScoreNetwork& net,
                               const DiffusionConfig& config,
                               const DenoisingBatch& batch) {
  const auto& layout = net.layout();
  check_latents(net, batch.clean);
  if (batch.mask.values.size() != layout.total_dim()) {
    throw ShapeError("denoising_loss: mask width mismatch");
  }
  DenoisingResult out;
  out.state = masked_diffuse(config, layout, batch);
  const auto tape =
      mlp_forward_tape(net.params(), net.build_input(out.state, batch.times));
  const std::size_t n = batch.clean.rows();
  const std::size_t d = layout.total_dim();
  Tensor upstream({n, d});
  const double scale = batch.omega / static_cast<double>(n * d);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double m = batch.mask.values[j];
      if (m == 0.0) continue;
      const std::size_t idx = r * d + j;
      const double diff = tape.output[idx] - batch.noise[idx];
      loss += diff * diff;
      upstream[idx] = 2.0 * scale * diff;
    }
  }
  out.loss = loss * scale;
  out.grads = mlp_backward(net.params(), tape, upstream).params;
  return out;
}

TrainingBatchOutcome training_step(const DiffusionConfig& config,
                                   ScoreNetwork& net, const Tensor& latents,
                                   Rng& rng) {
  check_latents(net, latents);
  const auto& layout = net.layout();
  const std::size_t n = latents.rows();
  TrainingBatchOutcome outcome;
  outcome.partition = sample_partition(config, layout.modality_count(), rng);
  outcome.times.resize(n);
  for (auto& t : outcome.times) t = rng.uniform(config.t_eps, config.horizon);
  outcome.t = mean_of(outcome.times);
  Tensor noise = rng.normal_tensor(latents.shape());
  const auto batch = make_masked_batch(config, layout, latents,
                                       outcome.partition, outcome.times,
                                       std::move(noise));
  return apply(net, config, batch, std::move(outcome));
}

TrainingBatchOutcome training_step(const DiffusionConfig& config,
                                   ScoreNetwork& net,
                                   std::span<const AutoencoderPair> autoencoders,
                                   std::span<const LatentNormalizer> normalizers,
                                   std::span<const Tensor> batch, Rng& rng) {
  return training_step(config, net,
                       encode_joint(autoencoders, normalizers, batch), rng);
}

TrainingBatchOutcome unidiffuser_training_step(const DiffusionConfig& config,
                                               ScoreNetwork& net,
                                               const Tensor& latents,
                                               Rng& rng) {
  check_latents(net, latents);
  const auto& layout = net.layout();
  const std::size_t n = latents.rows();
  const std::size_t m = layout.modality_count();
  TrainingBatchOutcome outcome;
  outcome.partition = SubsetPartition::unconditional(m);
  Tensor times({n, m});
  for (auto& t : times.values()) t = rng.uniform(config.t_eps, config.horizon);
  outcome.times = times.storage();
  outcome.t = mean_of(outcome.times);
  Tensor noise = rng.normal_tensor(latents.shape());
  const auto batch =
      make_unidiffuser_batch(layout, latents, std::move(times), std::move(noise));
  return apply(net, config, batch, std::move(outcome));
}

void train_score_network(const DiffusionConfig& config, ScoreNetwork& net,
                         const Tensor& latents,
                         const ScoreTrainingOptions& options) {
  config.validate();
  check_latents(net, latents);
  if (options.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  DiffusionConfig effective = config;
  if (options.mode == ScoreTrainingMode::kUnconditional) effective.d = 1.0;
  Rng rng(options.seed);
  const std::size_t n = latents.rows();
  std::vector<std::size_t> idx(options.batch_size);
  for (std::size_t step = 0; step < options.steps; ++step) {
    for (auto& i : idx) i = rng.index(n);
    const Tensor batch = gather_rows(latents, idx);
    TrainingBatchOutcome outcome =
        options.mode == ScoreTrainingMode::kUniDiffuser
            ? unidiffuser_training_step(effective, net, batch, rng)
            : training_step(effective, net, batch, rng);
    if (options.on_step) options.on_step(step, outcome);
  }
  net.set_trained_mode(options.mode);
}

Tensor encode_joint(std::span<const AutoencoderPair> autoencoders,
                    std::span<const LatentNormalizer> normalizers,
                    std::span<const Tensor> data) {
  if (autoencoders.size() != data.size() ||
      normalizers.size() != data.size()) {
    throw ConfigError("encode_joint: need one autoencoder and normalizer per "
                      "modality");
  }
  std::vector<Tensor> blocks;
  blocks.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    blocks.push_back(encode(autoencoders[i], normalizers[i], data[i]));
  }
  return concat_cols(blocks);
}

}  // namespace mld
