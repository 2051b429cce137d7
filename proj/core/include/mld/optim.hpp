#pragma once

#include <cstdint>

#include "mld/mlp.hpp"

namespace mld {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments mirror the parameter structure.
struct AdamState {
  AdamConfig config;
  std::int64_t step_count = 0;
  MlpParams first_moment;
  MlpParams second_moment;

  static AdamState for_params(const MlpParams& params, AdamConfig config = {});
};

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads);

// Exponential moving average of parameters, used for sampling.
struct EmaState {
  MlpParams shadow;
  double momentum = 0.999;

  static EmaState for_params(const MlpParams& params, double momentum = 0.999);
};

// shadow <- m * shadow + (1 - m) * params
void ema_update(EmaState& ema, const MlpParams& params);

}  // namespace mld
