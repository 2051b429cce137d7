#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mld/diffusion.hpp"
#include "mld/modality.hpp"
#include "mld/score_network.hpp"

namespace mld {

struct RepaintConfig {
  std::size_t resample_times = 10;  // r
  std::size_t jump = 10;            // j
};

struct SamplerConfig {
  // 0 means "use DiffusionConfig::n_steps".
  std::size_t n_steps = 0;
  std::optional<RepaintConfig> repaint;
  std::uint64_t seed = 0;

  std::size_t steps(const DiffusionConfig& diffusion) const;
  void validate(const DiffusionConfig& diffusion) const;
};

// Score of the state [n, D] given the multi-time vector; returns [n, D].
using ScoreFn =
    std::function<Tensor(const Tensor& state, const MultiTimeVector& tau)>;

// Uses the EMA weights unless use_ema is false.
ScoreFn network_score_fn(const ScoreNetwork& net,
                         const DiffusionConfig& diffusion, bool use_ema = true);
// Exact score for N(mean0, diag(cov0)) data at time max(tau).
ScoreFn oracle_score_fn(std::vector<double> mean0, std::vector<double> cov0,
                        const DiffusionConfig& diffusion);

// One Euler-Maruyama step of the reverse VP-SDE, evaluated at forward time t':
//   state + dt [1/2 beta(t') state + beta(t') score] + sqrt(beta(t') dt) noise.
// A null noise pointer means a noiseless step.
Tensor em_reverse_step(const DiffusionConfig& config, const Tensor& state,
                       const Tensor& score, double t_prime, double dt,
                       const Tensor* noise);

struct SamplerStep {
  std::size_t iteration = 0;   // position in the schedule
  std::size_t step_index = 0;  // n, with t' = T - n dt
  double t_prime = 0.0;
  const Tensor* state = nullptr;  // after the update (and re-masking)
};
using StepObserver = std::function<void(const SamplerStep&)>;

// Step indices visited by the sampler. Windows of j consecutive indices are
// each replayed r times before moving on; a final partial window (when j
// does not divide N) is replayed the same way.
std::vector<std::size_t> repaint_schedule(std::size_t n_steps,
                                          std::size_t resample_times,
                                          std::size_t jump);
std::vector<std::size_t> sampling_schedule(const DiffusionConfig& diffusion,
                                           const SamplerConfig& sampler);

// count joint samples [count, D], R_0 ~ N(0, I), all modalities diffused.
Tensor joint_generate(const DiffusionConfig& config,
                      const SamplerConfig& sampler, const ScoreFn& score,
                      const ModalityLayout& layout, std::size_t count,
                      const StepObserver& observer = {});

// Multi-time conditional generation. `conditioning` holds one block per a2
// modality, each [count, dim] or [dim] (broadcast). Returns the joint state
// [count, D]; a2 coordinates equal the conditioning values bit-for-bit.
Tensor conditional_generate(const DiffusionConfig& config,
                            const SamplerConfig& sampler, const ScoreFn& score,
                            const ModalityLayout& layout,
                            const SubsetPartition& partition,
                            std::span<const ModalityBlock> conditioning,
                            std::size_t count,
                            const StepObserver& observer = {});

// In-painting with an unconditional score: each step re-diffuses the
// conditioning blocks to the current noise level and then takes an unmasked
// step. Returned a2 coordinates are reset to the conditioning values.
Tensor inpaint_conditional_generate(const DiffusionConfig& config,
                                    const SamplerConfig& sampler,
                                    const ScoreFn& score,
                                    const ModalityLayout& layout,
                                    const SubsetPartition& partition,
                                    std::span<const ModalityBlock> conditioning,
                                    std::size_t count,
                                    const StepObserver& observer = {});

}  // namespace mld
