#pragma once

#include <cstdint>

#include "mld/diffusion.hpp"
#include "mld/mlp.hpp"
#include "mld/modality.hpp"
#include "mld/optim.hpp"

namespace mld {

class TensorArchive;

enum class ScoreTrainingMode { kMultiTime = 0, kUniDiffuser = 1, kUnconditional = 2 };

const char* training_mode_name(ScoreTrainingMode mode);
ScoreTrainingMode training_mode_from_name(const std::string& name);

struct ScoreNetConfig {
  std::size_t width = 128;
  std::size_t blocks = 2;
  // Sinusoidal embedding size per modality time (even).
  std::size_t time_embed = 16;
  double max_frequency = 100.0;
  Activation activation = Activation::kSilu;
  AdamConfig adam{};
  double ema_momentum = 0.999;
  std::uint64_t seed = 0;

  void validate() const;
};

// sin/cos features of t at frequencies geometrically spaced in
// [1, max_frequency]; writes `size` values to out.
void time_embedding(double t, std::size_t size, double max_frequency,
                    std::span<double> out);

// Residual MLP over [state, embed(t_1), ..., embed(t_M)] predicting the
// noise that produced the state. Owns its optimizer and EMA shadow.
class ScoreNetwork {
 public:
  ScoreNetwork(ModalityLayout layout, ScoreNetConfig config);
  ScoreNetwork(ModalityLayout layout, ScoreNetConfig config, MlpParams params,
               MlpParams ema_shadow);

  const ModalityLayout& layout() const { return layout_; }
  const ScoreNetConfig& config() const { return config_; }
  const MlpParams& params() const { return params_; }
  MlpParams& params() { return params_; }
  const EmaState& ema() const { return ema_; }
  EmaState& ema() { return ema_; }
  AdamState& adam() { return adam_; }

  ScoreTrainingMode trained_mode() const { return mode_; }
  void set_trained_mode(ScoreTrainingMode mode) { mode_ = mode; }

  // [n, D] state and [n, M] per-sample times -> [n, D + M * time_embed].
  Tensor build_input(const Tensor& state, const Tensor& times) const;
  // Predicted noise, [n, D].
  Tensor predict_noise(const Tensor& state, const Tensor& times,
                       bool use_ema) const;
  // score = -eps_hat / sigma(t_block) blockwise; zero on blocks with t = 0.
  Tensor score(const DiffusionConfig& diffusion, const Tensor& state,
               const Tensor& times, bool use_ema) const;

  // Applies Adam with the given gradients, then updates the EMA.
  void apply_gradients(const MlpParams& grads);

 private:
  ModalityLayout layout_;
  ScoreNetConfig config_;
  MlpParams params_;
  AdamState adam_;
  EmaState ema_;
  ScoreTrainingMode mode_ = ScoreTrainingMode::kMultiTime;
};

// Broadcasts one multi-time vector to n rows.
Tensor broadcast_times(const MultiTimeVector& tau, std::size_t n);

// Checkpoint names: "score.layer{k}.{w|b}", "score.ema.layer{k}.{w|b}",
// layout.*, score.config, score.mode, diffusion.config.
TensorArchive score_archive(const ScoreNetwork& net,
                            const DiffusionConfig& diffusion);
ScoreNetwork load_score_network(const TensorArchive& archive,
                                DiffusionConfig* diffusion = nullptr);

}  // namespace mld
