#include "mld/score_network.hpp"

#include <cmath>

#include "mld/checkpoint.hpp"
#include "mld/error.hpp"

namespace mld {

const char* training_mode_name(ScoreTrainingMode mode) {
  switch (mode) {
    case ScoreTrainingMode::kMultiTime:
      return "multitime";
    case ScoreTrainingMode::kUniDiffuser:
      return "unidiffuser";
    case ScoreTrainingMode::kUnconditional:
      return "unconditional";
  }
  return "unknown";
}

ScoreTrainingMode training_mode_from_name(const std::string& name) {
  if (name == "multitime") return ScoreTrainingMode::kMultiTime;
  if (name == "unidiffuser") return ScoreTrainingMode::kUniDiffuser;
  if (name == "unconditional") return ScoreTrainingMode::kUnconditional;
  throw ConfigError("unknown training mode '" + name + "'");
}

void ScoreNetConfig::validate() const {
  if (width == 0) throw ConfigError("score_net.width must be >= 1");
  if (time_embed == 0 || time_embed % 2 != 0) {
    throw ConfigError("score_net.time_embed must be a positive even number");
  }
  if (!(max_frequency >= 1.0)) {
    throw ConfigError("score_net.max_frequency must be >= 1");
  }
  if (!(adam.lr > 0.0)) throw ConfigError("score_net.lr must be positive");
  if (!(ema_momentum > 0.0 && ema_momentum < 1.0)) {
    throw ConfigError("score_net.ema must lie in (0, 1)");
  }
}

void time_embedding(double t, std::size_t size, double max_frequency,
                    std::span<double> out) {
  const std::size_t half = size / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double frac =
        half > 1 ? static_cast<double>(k) / static_cast<double>(half - 1) : 0.0;
    const double w = std::pow(max_frequency, frac);
    out[k] = std::sin(w * t);
    out[half + k] = std::cos(w * t);
  }
}

namespace {
MlpParams init_params(const ModalityLayout& layout, const ScoreNetConfig& c) {
  c.validate();
  Rng rng(c.seed);
  const std::size_t in =
      layout.total_dim() + layout.modality_count() * c.time_embed;
  return make_residual_mlp(in, c.width, c.blocks, layout.total_dim(),
                           c.activation, rng);
}
}  // namespace

ScoreNetwork::ScoreNetwork(ModalityLayout layout, ScoreNetConfig config)
    : layout_(std::move(layout)),
      config_(config),
      params_(init_params(layout_, config_)),
      adam_(AdamState::for_params(params_, config_.adam)),
      ema_(EmaState::for_params(params_, config_.ema_momentum)) {}

ScoreNetwork::ScoreNetwork(ModalityLayout layout, ScoreNetConfig config,
                           MlpParams params, MlpParams ema_shadow)
    : layout_(std::move(layout)),
      config_(config),
      params_(std::move(params)),
      adam_(AdamState::for_params(params_, config_.adam)),
      ema_{std::move(ema_shadow), config_.ema_momentum} {
  config_.validate();
  params_.validate();
  const std::size_t in =
      layout_.total_dim() + layout_.modality_count() * config_.time_embed;
  if (params_.in_dim() != in || params_.out_dim() != layout_.total_dim()) {
    throw ShapeError("score network dims do not match layout");
  }
}

Tensor ScoreNetwork::build_input(const Tensor& state,
                                 const Tensor& times) const {
  const std::size_t n = state.rows();
  const std::size_t d = layout_.total_dim();
  const std::size_t m = layout_.modality_count();
  const std::size_t e = config_.time_embed;
  if (state.rank() != 2 || state.cols() != d) {
    throw ShapeError("score input state must be [n, " + std::to_string(d) +
                     "], got " + shape_string(state.shape()));
  }
  if (times.rank() != 2 || times.rows() != n || times.cols() != m) {
    throw ShapeError("score input times must be [n, " + std::to_string(m) +
                     "], got " + shape_string(times.shape()));
  }
  const std::size_t width = d + m * e;
  Tensor input({n, width});
  for (std::size_t r = 0; r < n; ++r) {
    auto row = input.row(r);
    std::copy_n(state.data() + r * d, d, row.begin());
    for (std::size_t i = 0; i < m; ++i) {
      time_embedding(times.at(r, i), e, config_.max_frequency,
                     row.subspan(d + i * e, e));
    }
  }
  return input;
}

Tensor ScoreNetwork::predict_noise(const Tensor& state, const Tensor& times,
                                   bool use_ema) const {
  return mlp_forward(use_ema ? ema_.shadow : params_,
                     build_input(state, times));
}

Tensor ScoreNetwork::score(const DiffusionConfig& diffusion,
                           const Tensor& state, const Tensor& times,
                           bool use_ema) const {
  Tensor eps = predict_noise(state, times, use_ema);
  const std::size_t n = state.rows();
  const std::size_t d = layout_.total_dim();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < layout_.modality_count(); ++i) {
      const double t = times.at(r, i);
      const double inv_sigma = t > 0.0 ? -1.0 / kernel(diffusion, t).std() : 0.0;
      const std::size_t off = layout_.offset(i);
      for (std::size_t j = 0; j < layout_.latent_dim(i); ++j) {
        eps[r * d + off + j] *= inv_sigma;
      }
    }
  }
  return eps;
}

void ScoreNetwork::apply_gradients(const MlpParams& grads) {
  adam_step(adam_, params_, grads);
  ema_update(ema_, params_);
}

Tensor broadcast_times(const MultiTimeVector& tau, std::size_t n) {
  const std::size_t m = tau.times.size();
  Tensor times({n, m});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy(tau.times.begin(), tau.times.end(), times.data() + r * m);
  }
  return times;
}

TensorArchive score_archive(const ScoreNetwork& net,
                            const DiffusionConfig& diffusion) {
  TensorArchive archive;
  add_layout(archive, net.layout());
  const auto& c = net.config();
  archive.add("score.config",
              Tensor::vector({static_cast<double>(c.width),
                              static_cast<double>(c.blocks),
                              static_cast<double>(c.time_embed),
                              c.max_frequency, c.ema_momentum}));
  archive.add_scalar("score.mode", static_cast<double>(net.trained_mode()));
  archive.add("diffusion.config",
              Tensor::vector({diffusion.beta_min, diffusion.beta_max,
                              diffusion.horizon,
                              static_cast<double>(diffusion.n_steps),
                              diffusion.d, diffusion.t_eps}));
  add_mlp(archive, "score", net.params());
  add_mlp(archive, "score.ema", net.ema().shadow);
  return archive;
}

ScoreNetwork load_score_network(const TensorArchive& archive,
                                DiffusionConfig* diffusion) {
  ModalityLayout layout = load_layout(archive);
  const auto& cfg = archive.get("score.config");
  if (cfg.size() != 5) throw IoError("score.config is malformed");
  ScoreNetConfig c;
  c.width = static_cast<std::size_t>(cfg[0]);
  c.blocks = static_cast<std::size_t>(cfg[1]);
  c.time_embed = static_cast<std::size_t>(cfg[2]);
  c.max_frequency = cfg[3];
  c.ema_momentum = cfg[4];
  MlpParams params = load_mlp(archive, "score");
  c.activation = params.activation;
  ScoreNetwork net(std::move(layout), c, std::move(params),
                   load_mlp(archive, "score.ema"));
  const double mode = archive.get_scalar("score.mode");
  if (mode != 0.0 && mode != 1.0 && mode != 2.0) {
    throw IoError("score.mode is malformed");
  }
  net.set_trained_mode(static_cast<ScoreTrainingMode>(static_cast<int>(mode)));
  if (diffusion) {
    const auto& dc = archive.get("diffusion.config");
    if (dc.size() != 6) throw IoError("diffusion.config is malformed");
    diffusion->beta_min = dc[0];
    diffusion->beta_max = dc[1];
    diffusion->horizon = dc[2];
    diffusion->n_steps = static_cast<std::size_t>(dc[3]);
    diffusion->d = dc[4];
    diffusion->t_eps = dc[5];
  }
  return net;
}

}  // namespace mld
