#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mld/modality.hpp"
#include "mld/rng.hpp"
#include "mld/tensor.hpp"

namespace mld {

// Variance-preserving SDE with linear beta schedule
//   dR = -1/2 beta(t) R dt + sqrt(beta(t)) dW,
//   beta(t) = beta_min + t (beta_max - beta_min).
struct DiffusionConfig {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double horizon = 1.0;  // T
  std::size_t n_steps = 250;
  // Probability that a training step diffuses every modality (A2 empty).
  double d = 0.5;
  // Training times are drawn from U[t_eps, T].
  double t_eps = 1e-5;

  void validate() const;
};

// Perturbation kernel q(r | z, t) = N(a(t) z, sigma^2(t) I).
struct KernelParams {
  double mean_coeff = 1.0;  // a(t)
  double variance = 0.0;    // sigma^2(t) = 1 - a(t)^2

  double std() const;
};

double beta(const DiffusionConfig& config, double t);
// Integral of beta from 0 to t.
double beta_integral(const DiffusionConfig& config, double t);
KernelParams kernel(const DiffusionConfig& config, double t);
// Transition from time s to time u >= s: r_u = a r_s + sigma noise.
KernelParams kernel_between(const DiffusionConfig& config, double s, double u);

// r = a(t) z + sigma(t) noise; z and noise share a shape.
Tensor diffuse(const DiffusionConfig& config, const Tensor& z, double t,
               const Tensor& noise);

// Draws the conditioning set A2: empty with probability d, otherwise
// uniform over the 2^M - 2 nonempty proper subsets. For M = 1 the only
// admissible choice is A2 empty.
SubsetPartition sample_partition(const DiffusionConfig& config, std::size_t m,
                                 Rng& rng);
// Probability that sample_partition returns this conditioning set.
double partition_probability(const DiffusionConfig& config, std::size_t m,
                             const std::vector<std::size_t>& a2);

// Loss weight 1 + dim(A2) / dim(A1), dims summed over latent sizes.
double omega(const ModalityLayout& layout, const SubsetPartition& partition);

// Exact score of the time-t marginal for initial data N(mean0, diag(cov0)):
//   -(r - a mean0) / (a^2 cov0 + sigma^2), elementwise.
// r is [n, D] or [D].
Tensor gaussian_score_oracle(std::span<const double> mean0,
                             std::span<const double> diag_cov0,
                             const DiffusionConfig& config, const Tensor& r,
                             double t);

}  // namespace mld
