#include "mld/optim.hpp"

#include <cmath>
#include <utility>

#include "mld/error.hpp"

namespace mld {

namespace {
void check_mirrors(const std::vector<const Tensor*>& a,
                   const std::vector<const Tensor*>& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": tensor count mismatch");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->shape() != b[i]->shape()) {
      throw ShapeError(std::string(what) + ": shape mismatch at tensor " +
                       std::to_string(i));
    }
  }
}
}  // namespace

AdamState AdamState::for_params(const MlpParams& params, AdamConfig config) {
  return AdamState{config, 0, params.zeros_like(), params.zeros_like()};
}

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads) {
  const auto& cfg = state.config;
  check_mirrors(std::as_const(params).tensors(), grads.tensors(), "adam_step");
  check_mirrors(std::as_const(params).tensors(),
                std::as_const(state.first_moment).tensors(), "adam_step");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    double* pk = p[k]->data();
    const double* gk = g[k]->data();
    double* mk = m[k]->data();
    double* vk = v[k]->data();
    for (std::size_t i = 0; i < p[k]->size(); ++i) {
      mk[i] = cfg.beta1 * mk[i] + (1.0 - cfg.beta1) * gk[i];
      vk[i] = cfg.beta2 * vk[i] + (1.0 - cfg.beta2) * gk[i] * gk[i];
      const double m_hat = mk[i] / c1;
      const double v_hat = vk[i] / c2;
      pk[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

EmaState EmaState::for_params(const MlpParams& params, double momentum) {
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw ConfigError("ema momentum must lie in (0, 1)");
  }
  return EmaState{params, momentum};
}

void ema_update(EmaState& ema, const MlpParams& params) {
  check_mirrors(std::as_const(ema.shadow).tensors(), params.tensors(),
                "ema_update");
  auto s = ema.shadow.tensors();
  auto p = params.tensors();
  const double m = ema.momentum;
  for (std::size_t k = 0; k < s.size(); ++k) {
    double* sk = s[k]->data();
    const double* pk = p[k]->data();
    for (std::size_t i = 0; i < s[k]->size(); ++i) {
      sk[i] = m * sk[i] + (1.0 - m) * pk[i];
    }
  }
}

}  // namespace mld
