#include "mld/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "mld/error.hpp"

namespace mld {

std::size_t SamplerConfig::steps(const DiffusionConfig& diffusion) const {
  return n_steps == 0 ? diffusion.n_steps : n_steps;
}

void SamplerConfig::validate(const DiffusionConfig& diffusion) const {
  const std::size_t n = steps(diffusion);
  if (n < 1) throw ConfigError("sampler: n_steps must be >= 1");
  if (repaint) {
    if (repaint->resample_times < 1) {
      throw ConfigError("sampler: repaint r must be >= 1");
    }
    if (repaint->jump < 1 || repaint->jump > n) {
      throw ConfigError("sampler: repaint jump must lie in [1, N]");
    }
  }
}

ScoreFn network_score_fn(const ScoreNetwork& net,
                         const DiffusionConfig& diffusion, bool use_ema) {
  return [&net, diffusion, use_ema](const Tensor& state,
                                    const MultiTimeVector& tau) {
    return net.score(diffusion, state, broadcast_times(tau, state.rows()),
                     use_ema);
  };
}

ScoreFn oracle_score_fn(std::vector<double> mean0, std::vector<double> cov0,
                        const DiffusionConfig& diffusion) {
  return [mean0 = std::move(mean0), cov0 = std::move(cov0), diffusion](
             const Tensor& state, const MultiTimeVector& tau) {
    const double t = *std::max_element(tau.times.begin(), tau.times.end());
    return gaussian_score_oracle(mean0, cov0, diffusion, state, t);
  };
}

Tensor em_reverse_step(const DiffusionConfig& config, const Tensor& state,
                       const Tensor& score, double t_prime, double dt,
                       const Tensor* noise) {
  if (!(dt > 0.0)) throw ConfigError("em_reverse_step: dt must be positive");
  if (!(t_prime > 0.0 && t_prime <= config.horizon)) {
    throw ConfigError("em_reverse_step: t' must lie in (0, T]");
  }
  if (score.shape() != state.shape() ||
      (noise && noise->shape() != state.shape())) {
    throw ShapeError("em_reverse_step: state/score/noise shapes differ");
  }
  const double b = beta(config, t_prime);
  const double diffusion = std::sqrt(b * dt);
  Tensor next = state;
  for (std::size_t i = 0; i < next.size(); ++i) {
    next[i] += dt * (0.5 * b * state[i] + b * score[i]);
    if (noise) next[i] += diffusion * (*noise)[i];
  }
  next.require_finite("reverse SDE state");
  return next;
}

std::vector<std::size_t> repaint_schedule(std::size_t n_steps,
                                          std::size_t resample_times,
                                          std::size_t jump) {
  if (n_steps < 1) throw ConfigError("repaint_schedule: N must be >= 1");
  if (resample_times < 1) throw ConfigError("repaint_schedule: r must be >= 1");
  if (jump < 1 || jump > n_steps) {
    throw ConfigError("repaint_schedule: jump must lie in [1, N]");
  }
  std::vector<std::size_t> schedule;
  schedule.reserve(n_steps * resample_times);
  for (std::size_t start = 0; start < n_steps; start += jump) {
    const std::size_t end = std::min(n_steps, start + jump);
    for (std::size_t rep = 0; rep < resample_times; ++rep) {
      for (std::size_t n = start; n < end; ++n) schedule.push_back(n);
    }
  }
  return schedule;
}

std::vector<std::size_t> sampling_schedule(const DiffusionConfig& diffusion,
                                           const SamplerConfig& sampler) {
  sampler.validate(diffusion);
  const std::size_t n = sampler.steps(diffusion);
  if (!sampler.repaint) return repaint_schedule(n, 1, n);
  return repaint_schedule(n, sampler.repaint->resample_times,
                          sampler.repaint->jump);
}

namespace {

enum class Method { kMultiTime, kInpaint };

// Broadcast or validate conditioning blocks to [count, dim] and write them
// into a full joint tensor (a1 columns left at zero).
Tensor conditioning_joint(const ModalityLayout& layout,
                          const SubsetPartition& partition,
                          std::span<const ModalityBlock> conditioning,
                          std::size_t count) {
  const std::size_t d = layout.total_dim();
  Tensor joint({count, d});
  std::vector<int> seen(layout.modality_count(), 0);
  for (const auto& block : conditioning) {
    const std::size_t i = block.modality;
    if (i >= layout.modality_count() || partition.is_generated(i)) {
      throw ConfigError("conditioning block for modality " +
                        std::to_string(i) + " is not in the conditioning set");
    }
    if (seen[i]++) {
      throw ConfigError("duplicate conditioning block for modality " +
                        std::to_string(i));
    }
    const std::size_t w = layout.latent_dim(i);
    const bool broadcast = block.values.rank() == 1;
    if (block.values.cols() != w ||
        (!broadcast && block.values.rows() != count)) {
      throw ShapeError("conditioning block for modality " + std::to_string(i) +
                       " has shape " + shape_string(block.values.shape()));
    }
    for (std::size_t r = 0; r < count; ++r) {
      const double* src = block.values.data() + (broadcast ? 0 : r * w);
      std::copy_n(src, w, joint.data() + r * d + layout.offset(i));
    }
  }
  for (auto i : partition.a2) {
    if (!seen[i]) {
      throw ConfigError("missing conditioning block for modality " +
                        std::to_string(i));
    }
  }
  return joint;
}

// Copies a2 columns of `source` into `state`.
void impose(const ModalityMask& mask, const Tensor& source, Tensor& state) {
  const std::size_t d = mask.values.size();
  for (std::size_t r = 0; r < state.rows(); ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      if (mask.values[j] == 0.0) state[r * d + j] = source[r * d + j];
    }
  }
}

Tensor integrate(const DiffusionConfig& config, const SamplerConfig& sampler,
                 const ScoreFn& score, const ModalityLayout& layout,
                 const SubsetPartition& partition, const Tensor& cond,
                 Method method, const StepObserver& observer) {
  config.validate();
  partition.validate();
  if (partition.modality_count != layout.modality_count()) {
    throw ConfigError("partition/layout modality count mismatch");
  }
  const auto schedule = sampling_schedule(config, sampler);
  const std::size_t n_steps = sampler.steps(config);
  const double dt = config.horizon / static_cast<double>(n_steps);
  const std::size_t count = cond.rows();
  const std::size_t d = layout.total_dim();
  const ModalityMask mask = build_mask(layout, partition);
  const bool conditional = !partition.a2.empty();
  const MultiTimeVector all_diffused{
      std::vector<double>(layout.modality_count(), 0.0)};

  Rng rng(sampler.seed);
  Tensor state = rng.normal_tensor({count, d});
  if (conditional) impose(mask, cond, state);

  auto time_of = [&](std::size_t n) {
    return config.horizon - static_cast<double>(n) * dt;
  };

  for (std::size_t it = 0; it < schedule.size(); ++it) {
    const std::size_t n = schedule[it];
    if (it > 0 && n <= schedule[it - 1]) {
      // Jump back: re-noise from the time reached after step schedule[it-1]
      // up to the time at the start of step n.
      const double from = std::max(0.0, time_of(schedule[it - 1] + 1));
      const auto k = kernel_between(config, from, time_of(n));
      const double s = k.std();
      Tensor noise = rng.normal_tensor({count, d});
      for (std::size_t i = 0; i < state.size(); ++i) {
        if (method == Method::kInpaint || mask.values[i % d] != 0.0) {
          state[i] = k.mean_coeff * state[i] + s * noise[i];
        }
      }
    }
    const double t_prime = time_of(n);
    MultiTimeVector tau;
    if (method == Method::kInpaint) {
      tau = all_diffused;
      std::fill(tau.times.begin(), tau.times.end(), t_prime);
      if (conditional) {
        // Bring the available blocks to the current noise level.
        const Tensor noise = rng.normal_tensor({count, d});
        impose(mask, diffuse(config, cond, t_prime, noise), state);
      }
    } else {
      tau = build_multitime(partition, t_prime, config.horizon);
    }
    const bool last = it + 1 == schedule.size();
    const Tensor s = score(state, tau);
    std::optional<Tensor> noise;
    if (!last) noise = rng.normal_tensor({count, d});
    state = em_reverse_step(config, state, s, t_prime, dt,
                            noise ? &*noise : nullptr);
    if (method == Method::kMultiTime && conditional) impose(mask, cond, state);
    if (observer) observer({it, n, t_prime, &state});
  }
  if (conditional) impose(mask, cond, state);
  return state;
}

}  // namespace

Tensor joint_generate(const DiffusionConfig& config,
                      const SamplerConfig& sampler, const ScoreFn& score,
                      const ModalityLayout& layout, std::size_t count,
                      const StepObserver& observer) {
  const auto partition = SubsetPartition::unconditional(layout.modality_count());
  return integrate(config, sampler, score, layout, partition,
                   Tensor({count, layout.total_dim()}), Method::kMultiTime,
                   observer);
}

Tensor conditional_generate(const DiffusionConfig& config,
                            const SamplerConfig& sampler, const ScoreFn& score,
                            const ModalityLayout& layout,
                            const SubsetPartition& partition,
                            std::span<const ModalityBlock> conditioning,
                            std::size_t count, const StepObserver& observer) {
  partition.validate();
  const Tensor cond = conditioning_joint(layout, partition, conditioning, count);
  return integrate(config, sampler, score, layout, partition, cond,
                   Method::kMultiTime, observer);
}

Tensor inpaint_conditional_generate(const DiffusionConfig& config,
                                    const SamplerConfig& sampler,
                                    const ScoreFn& score,
                                    const ModalityLayout& layout,
                                    const SubsetPartition& partition,
                                    std::span<const ModalityBlock> conditioning,
                                    std::size_t count,
                                    const StepObserver& observer) {
  partition.validate();
  const Tensor cond = conditioning_joint(layout, partition, conditioning, count);
  return integrate(config, sampler, score, layout, partition, cond,
                   Method::kInpaint, observer);
}

}  // namespace mld
