#include "mld/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mld/checkpoint.hpp"
#include "mld/error.hpp"

namespace mld {

void AutoencoderConfig::validate() const {
  if (epochs == 0) throw ConfigError("autoencoder epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("autoencoder batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("autoencoder lr must be positive");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("autoencoder hidden widths must be >= 1");
  }
}

AutoencoderPair make_autoencoder(const ModalitySpec& spec,
                                 const AutoencoderConfig& config, Rng& rng) {
  spec.validate();
  config.validate();
  std::vector<std::size_t> enc{spec.data_dim};
  enc.insert(enc.end(), config.hidden.begin(), config.hidden.end());
  enc.push_back(spec.latent_dim);
  std::vector<std::size_t> dec(enc.rbegin(), enc.rend());
  AutoencoderPair pair{spec, make_mlp(enc, config.activation, rng),
                       make_mlp(dec, config.activation, rng)};
  return pair;
}

ReconstructionGradients reconstruction_gradients(const AutoencoderPair& pair,
                                                 const Tensor& batch) {
  const auto enc_tape = mlp_forward_tape(pair.encoder, batch);
  const auto dec_tape = mlp_forward_tape(pair.decoder, enc_tape.output);
  const Tensor& x = enc_tape.input;
  Tensor residual = dec_tape.output - x;
  const double scale = 1.0 / static_cast<double>(residual.size());
  const double loss = squared_norm(residual) * scale;
  residual *= 2.0 * scale;
  auto dec_grads = mlp_backward(pair.decoder, dec_tape, residual);
  auto enc_grads = mlp_backward(pair.encoder, enc_tape, dec_grads.input);
  return {loss, std::move(enc_grads.params), std::move(dec_grads.params)};
}

double reconstruction_loss(const AutoencoderPair& pair, const Tensor& data) {
  const Tensor recon = mlp_forward(pair.decoder, mlp_forward(pair.encoder, data));
  const Tensor x = data.rank() == 1 ? data.reshaped({1, data.size()}) : data;
  return squared_norm(recon.reshaped(x.shape()) - x) /
         static_cast<double>(x.size());
}

AutoencoderPair train_autoencoder(const ModalitySpec& spec, const Tensor& data,
                                  const AutoencoderConfig& config,
                                  AutoencoderTrainLog* log) {
  spec.validate();
  config.validate();
  if (data.rank() != 2 || data.cols() != spec.data_dim) {
    throw ShapeError("modality '" + spec.name + "' data has shape " +
                     shape_string(data.shape()) + ", expected [n, " +
                     std::to_string(spec.data_dim) + "]");
  }
  const std::size_t n = data.rows();
  if (n == 0) throw ConfigError("modality '" + spec.name + "' has no samples");

  Rng rng(config.seed);
  AutoencoderPair pair = make_autoencoder(spec, config, rng);
  auto enc_opt = AdamState::for_params(pair.encoder, {.lr = config.lr});
  auto dec_opt = AdamState::for_params(pair.decoder, {.lr = config.lr});

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::min(config.batch_size, n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      const Tensor batch = gather_rows(
          data, std::span<const std::size_t>(order).subspan(start, end - start));
      auto g = reconstruction_gradients(pair, batch);
      if (!std::isfinite(g.loss)) {
        throw NumericError("autoencoder '" + spec.name +
                           "': non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      adam_step(enc_opt, pair.encoder, g.encoder);
      adam_step(dec_opt, pair.decoder, g.decoder);
      total += g.loss;
      ++batches;
    }
    if (log) log->epoch_loss.push_back(total / static_cast<double>(batches));
  }
  return pair;
}

Tensor LatentNormalizer::normalize(const Tensor& z) const {
  Tensor out = z;
  const std::size_t c = out.cols();
  if (c != mean.size()) throw ShapeError("normalize: latent width mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (out[i] - mean[i % c]) / std[i % c];
  }
  return out;
}

Tensor LatentNormalizer::denormalize(const Tensor& z) const {
  Tensor out = z;
  const std::size_t c = out.cols();
  if (c != mean.size()) throw ShapeError("denormalize: latent width mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = out[i] * std[i % c] + mean[i % c];
  }
  return out;
}

LatentNormalizer fit_normalizer(const AutoencoderPair& pair,
                                const Tensor& first_batch) {
  if (first_batch.rank() != 2 || first_batch.rows() < 2) {
    throw ConfigError("fit_normalizer needs a batch of at least 2 samples");
  }
  const Tensor z = mlp_forward(pair.encoder, first_batch);
  const std::size_t n = z.rows();
  const std::size_t c = z.cols();
  LatentNormalizer norm{column_mean(z), std::vector<double>(c, 0.0)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const double d = z.at(r, j) - norm.mean[j];
      norm.std[j] += d * d;
    }
  }
  for (auto& s : norm.std) {
    s = std::max(std::sqrt(s / static_cast<double>(n)), kNormalizerStdFloor);
  }
  return norm;
}

Tensor encode(const AutoencoderPair& pair, const LatentNormalizer& norm,
              const Tensor& x) {
  return norm.normalize(mlp_forward(pair.encoder, x));
}

Tensor decode(const AutoencoderPair& pair, const LatentNormalizer& norm,
              const Tensor& z_normalized) {
  return mlp_forward(pair.decoder, norm.denormalize(z_normalized));
}

TensorArchive autoencoder_archive(const AutoencoderPair& pair,
                                  const LatentNormalizer& norm) {
  TensorArchive archive;
  std::vector<std::int64_t> name(pair.spec.name.begin(), pair.spec.name.end());
  archive.add_integers("modality.name", name);
  archive.add_integers("modality.dims",
                       {static_cast<std::int64_t>(pair.spec.data_dim),
                        static_cast<std::int64_t>(pair.spec.latent_dim)});
  add_mlp(archive, "encoder", pair.encoder);
  add_mlp(archive, "decoder", pair.decoder);
  archive.add("norm.mean", Tensor::vector(norm.mean));
  archive.add("norm.std", Tensor::vector(norm.std));
  return archive;
}

void load_autoencoder(const TensorArchive& archive, AutoencoderPair& pair,
                      LatentNormalizer& norm) {
  const auto name = archive.get_integers("modality.name");
  const auto dims = archive.get_integers("modality.dims");
  if (dims.size() != 2 || dims[0] <= 0 || dims[1] <= 0) {
    throw IoError("modality.dims is malformed");
  }
  pair.spec.name.assign(name.begin(), name.end());
  pair.spec.data_dim = static_cast<std::size_t>(dims[0]);
  pair.spec.latent_dim = static_cast<std::size_t>(dims[1]);
  pair.encoder = load_mlp(archive, "encoder");
  pair.decoder = load_mlp(archive, "decoder");
  if (pair.encoder.in_dim() != pair.spec.data_dim ||
      pair.encoder.out_dim() != pair.spec.latent_dim ||
      pair.decoder.in_dim() != pair.spec.latent_dim ||
      pair.decoder.out_dim() != pair.spec.data_dim) {
    throw IoError("autoencoder '" + pair.spec.name +
                  "' networks do not match its dims");
  }
  const auto& mean = archive.get("norm.mean").storage();
  const auto& std = archive.get("norm.std").storage();
  if (mean.size() != pair.spec.latent_dim || std.size() != pair.spec.latent_dim) {
    throw IoError("normalizer size does not match latent_dim");
  }
  for (double s : std) {
    if (!(s > 0.0)) throw IoError("normalizer std must be positive");
  }
  norm = {mean, std};
}

}  // namespace mld
