#include "mld/diffusion.hpp"

#include <cmath>

#include "mld/error.hpp"

namespace mld {

void DiffusionConfig::validate() const {
  if (!(beta_min > 0.0 && beta_min < beta_max)) {
    throw ConfigError("diffusion: need 0 < beta_min < beta_max");
  }
  if (!(horizon > 0.0)) throw ConfigError("diffusion: horizon must be > 0");
  if (n_steps < 1) throw ConfigError("diffusion: n_steps must be >= 1");
  if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("diffusion: d must be in [0, 1]");
  if (!(t_eps > 0.0 && t_eps < horizon)) {
    throw ConfigError("diffusion: t_eps must be in (0, T)");
  }
}

double KernelParams::std() const { return std::sqrt(variance); }

namespace {
void check_time(const DiffusionConfig& config, double t) {
  if (!(t >= 0.0 && t <= config.horizon)) {
    throw ConfigError("diffusion time " + std::to_string(t) +
                      " outside [0, T]");
  }
}
}  // namespace

double beta(const DiffusionConfig& config, double t) {
  check_time(config, t);
  return config.beta_min + t * (config.beta_max - config.beta_min);
}

double beta_integral(const DiffusionConfig& config, double t) {
  return 0.5 * t * t * (config.beta_max - config.beta_min) +
         t * config.beta_min;
}

KernelParams kernel(const DiffusionConfig& config, double t) {
  check_time(config, t);
  const double log_a = -0.5 * beta_integral(config, t);
  // 1 - exp(2 log_a) via expm1 keeps small-t variances accurate.
  return {std::exp(log_a), -std::expm1(2.0 * log_a)};
}

KernelParams kernel_between(const DiffusionConfig& config, double s,
                            double u) {
  check_time(config, s);
  check_time(config, u);
  if (u < s) throw ConfigError("kernel_between: need s <= u");
  const double log_a =
      -0.5 * (beta_integral(config, u) - beta_integral(config, s));
  return {std::exp(log_a), -std::expm1(2.0 * log_a)};
}

Tensor diffuse(const DiffusionConfig& config, const Tensor& z, double t,
               const Tensor& noise) {
  if (z.shape() != noise.shape()) {
    throw ShapeError("diffuse: z " + shape_string(z.shape()) + " vs noise " +
                     shape_string(noise.shape()));
  }
  const auto k = kernel(config, t);
  const double s = k.std();
  Tensor r = z;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = k.mean_coeff * z[i] + s * noise[i];
  }
  return r;
}

SubsetPartition sample_partition(const DiffusionConfig& config, std::size_t m,
                                 Rng& rng) {
  if (m == 0) throw ConfigError("sample_partition: need at least one modality");
  if (m >= 63) throw ConfigError("sample_partition: too many modalities");
  // With one modality there is nothing to draw; no randomness is consumed.
  if (m == 1) return SubsetPartition::unconditional(m);
  if (rng.uniform() < config.d) return SubsetPartition::unconditional(m);
  // Bitmask of A2 in [1, 2^M - 2]: nonempty and not the full set.
  const std::uint64_t proper = (std::uint64_t{1} << m) - 2;
  const std::uint64_t bits = 1 + rng.index(static_cast<std::size_t>(proper));
  std::vector<std::size_t> a2;
  for (std::size_t i = 0; i < m; ++i) {
    if (bits & (std::uint64_t{1} << i)) a2.push_back(i);
  }
  return SubsetPartition::from_conditioning(m, std::move(a2));
}

double partition_probability(const DiffusionConfig& config, std::size_t m,
                             const std::vector<std::size_t>& a2) {
  if (m == 1) return a2.empty() ? 1.0 : 0.0;
  if (a2.empty()) return config.d;
  if (a2.size() >= m) return 0.0;
  const double proper = std::ldexp(1.0, static_cast<int>(m)) - 2.0;
  return (1.0 - config.d) / proper;
}

double omega(const ModalityLayout& layout, const SubsetPartition& partition) {
  partition.validate();
  const double dim_a1 = static_cast<double>(layout.dim_of(partition.a1));
  const double dim_a2 = static_cast<double>(layout.dim_of(partition.a2));
  if (dim_a1 == 0.0) throw ConfigError("omega: A1 has zero dimension");
  return 1.0 + dim_a2 / dim_a1;
}

Tensor gaussian_score_oracle(std::span<const double> mean0,
                             std::span<const double> diag_cov0,
                             const DiffusionConfig& config, const Tensor& r,
                             double t) {
  const std::size_t dim = r.cols();
  if (mean0.size() != dim || diag_cov0.size() != dim) {
    throw ShapeError("gaussian_score_oracle: moment dims do not match r");
  }
  const auto k = kernel(config, t);
  const double a = k.mean_coeff;
  Tensor score = r;
  for (std::size_t i = 0; i < score.size(); ++i) {
    const std::size_t j = i % dim;
    const double var = a * a * diag_cov0[j] + k.variance;
    score[i] = -(r[i] - a * mean0[j]) / var;
  }
  return score;
}

}  // namespace mld
