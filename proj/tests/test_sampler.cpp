#include <gtest/gtest.h>

#include <cmath>

#include "mld/error.hpp"
#include "mld/sampler.hpp"
#include "support/oracles.hpp"

namespace mld {
namespace {

const DiffusionConfig kDefault{};
constexpr double kRho = 0.8;

ModalityLayout scalar_layout(std::size_t m) {
  std::vector<ModalitySpec> specs;
  for (std::size_t i = 0; i < m; ++i) specs.push_back({"m" + std::to_string(i), 1, 1});
  return ModalityLayout(specs);
}

// Exact scores for (Z1, Z2) ~ N(0, [[1, rho], [rho, 1]]). With both blocks
// diffused to t this is the joint marginal score; with tau = (t, 0) it is the
// score of R1 given the clean Z2 = z2, i.e. of N(a rho z2, a^2 (1 - rho^2) + sigma^2).
ScoreFn bivariate_oracle() {
  return [](const Tensor& state, const MultiTimeVector& tau) {
    Tensor out(state.shape());
    const double t = std::max(tau.times[0], tau.times[1]);
    const auto k = kernel(kDefault, t);
    for (std::size_t r = 0; r < state.rows(); ++r) {
      if (tau.times[1] == 0.0) {
        const double v = k.mean_coeff * k.mean_coeff * (1 - kRho * kRho) + k.variance;
        out.at(r, 0) = -(state.at(r, 0) - k.mean_coeff * kRho * state.at(r, 1)) / v;
      } else {
        const auto s = testing::ref_bivariate_score(1.0, kRho, 1.0, k.mean_coeff,
                                                    state.at(r, 0), state.at(r, 1));
        out.at(r, 0) = s[0];
        out.at(r, 1) = s[1];
      }
    }
    return out;
  };
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

Moments column_moments(const Tensor& t, std::size_t c) {
  const auto col = testing::column(t, c);
  return {testing::sample_mean(col), testing::sample_variance(col)};
}

TEST(EmReverseStep, ZeroScoreNoiselessIsPureDrift) {
  const Tensor state = Tensor::vector({1.0, -2.0, 0.5});
  const double t = 0.6, dt = 0.01;
  const double b = 0.1 + t * (20.0 - 0.1);
  const Tensor next = em_reverse_step(kDefault, state, Tensor::zeros_like(state), t, dt,
                                      nullptr);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(next[i], state[i] * (1.0 + 0.5 * b * dt), 1e-15);
  }
}

TEST(EmReverseStep, StandardNormalScoreReversesDrift) {
  const Tensor state = Tensor::vector({1.0, -2.0, 0.5});
  Tensor score = state;
  score *= -1.0;
  const double t = 0.3, dt = 0.004;
  const double b = 0.1 + t * (20.0 - 0.1);
  const Tensor next = em_reverse_step(kDefault, state, score, t, dt, nullptr);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(next[i], state[i] * (1.0 - 0.5 * b * dt), 1e-15);
  }
}

TEST(EmReverseStep, NoiseAddsBetaDtVariance) {
  const std::size_t n = 200000;
  Rng rng(1);
  const Tensor state({n, 1});
  const Tensor noise = rng.normal_tensor({n, 1});
  const double t = 0.5, dt = 0.02;
  const Tensor next = em_reverse_step(kDefault, state, Tensor::zeros_like(state), t, dt,
                                      &noise);
  const auto m = column_moments(next, 0);
  const double expected = beta(kDefault, t) * dt;
  EXPECT_LT(std::abs(m.mean), 0.01);
  EXPECT_NEAR(m.variance / expected, 1.0, 0.01);
}

TEST(EmReverseStep, Preconditions) {
  const Tensor s = Tensor::vector({1.0});
  EXPECT_THROW(em_reverse_step(kDefault, s, s, 0.5, 0.0, nullptr), ConfigError);
  EXPECT_THROW(em_reverse_step(kDefault, s, s, 0.0, 0.1, nullptr), ConfigError);
  EXPECT_THROW(em_reverse_step(kDefault, s, Tensor::vector({1.0, 2.0}), 0.5, 0.1, nullptr),
               ShapeError);
  const Tensor huge = Tensor::vector({1e308});
  EXPECT_THROW(em_reverse_step(kDefault, huge, huge, 1.0, 1.0, nullptr), NumericError);
}

TEST(SamplerConfig, Validation) {
  SamplerConfig s;
  EXPECT_EQ(s.steps(kDefault), kDefault.n_steps);
  s.repaint = RepaintConfig{0, 1};
  EXPECT_THROW(s.validate(kDefault), ConfigError);
  s.repaint = RepaintConfig{2, 0};
  EXPECT_THROW(s.validate(kDefault), ConfigError);
  s.n_steps = 5;
  s.repaint = RepaintConfig{2, 6};
  EXPECT_THROW(s.validate(kDefault), ConfigError);
}

TEST(RepaintSchedule, SingleResampleIsLinear) {
  const auto s = repaint_schedule(7, 1, 3);
  EXPECT_EQ(s, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(RepaintSchedule, HandUnrolled) {
  EXPECT_EQ(repaint_schedule(4, 2, 2), (std::vector<std::size_t>{0, 1, 0, 1, 2, 3, 2, 3}));
}

TEST(RepaintSchedule, TruncatedLastWindowAndCoverage) {
  EXPECT_EQ(repaint_schedule(5, 2, 2),
            (std::vector<std::size_t>{0, 1, 0, 1, 2, 3, 2, 3, 4, 4}));
  for (auto [n, r, j] : {std::tuple{250, 10, 10}, {17, 3, 4}, {9, 2, 9}, {1, 5, 1}}) {
    const auto s = repaint_schedule(n, r, j);
    std::vector<int> seen(n, 0);
    for (auto i : s) ++seen[i];
    for (auto c : seen) EXPECT_EQ(c, r);
    EXPECT_EQ(s.back(), static_cast<std::size_t>(n - 1));
    EXPECT_EQ(s.size(), static_cast<std::size_t>(n * r));
  }
  EXPECT_THROW(repaint_schedule(4, 1, 5), ConfigError);
}

TEST(JointGenerate, OracleScoreRecoversGaussian) {
  const std::vector<double> mean{0.5, -1.0}, cov{0.25, 2.0};
  const auto layout = scalar_layout(2);
  SamplerConfig s;
  s.n_steps = 250;
  s.seed = 2;
  const Tensor out = joint_generate(kDefault, s, oracle_score_fn(mean, cov, kDefault), layout,
                                    10000);
  const auto mu = column_mean(out);
  const auto c = column_covariance(out);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_LT(std::abs(mu[j] - mean[j]), 0.05) << j;
    EXPECT_NEAR(c.at(j, j) / cov[j], 1.0, 0.05) << j;
  }
  EXPECT_LT(std::abs(c.at(0, 1)), 0.05);
}

TEST(JointGenerate, StandardNormalOracle) {
  const auto layout = scalar_layout(3);
  SamplerConfig s;
  s.n_steps = 250;
  s.seed = 3;
  const Tensor out = joint_generate(
      kDefault, s, oracle_score_fn(std::vector<double>(3, 0.0), std::vector<double>(3, 1.0),
                                   kDefault),
      layout, 10000);
  const auto mu = column_mean(out);
  const auto c = column_covariance(out);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LT(std::abs(mu[i]), 0.05);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(c.at(i, j), i == j ? 1.0 : 0.0, 0.05);
    }
  }
}

TEST(JointGenerate, SingleStepIsFinite) {
  SamplerConfig s;
  s.n_steps = 1;
  const Tensor out =
      joint_generate(kDefault, s, oracle_score_fn({0.0}, {1.0}, kDefault), scalar_layout(1), 64);
  EXPECT_EQ(out.rows(), 64u);
  EXPECT_TRUE(out.all_finite());
}

TEST(JointGenerate, PinnedSeedIsBitIdentical) {
  SamplerConfig s;
  s.n_steps = 40;
  s.seed = 9;
  const auto score = bivariate_oracle();
  const auto layout = scalar_layout(2);
  EXPECT_TRUE(joint_generate(kDefault, s, score, layout, 32) ==
              joint_generate(kDefault, s, score, layout, 32));
  s.seed = 10;
  EXPECT_FALSE(joint_generate(kDefault, s, score, layout, 32) ==
               joint_generate(kDefault, SamplerConfig{40, {}, 9}, score, layout, 32));
}

TEST(ConditionalGenerate, ExactScoreGivesGaussianConditional) {
  const auto layout = scalar_layout(2);
  const auto part = SubsetPartition::from_generated(2, {0});
  for (double c : {-1.0, 0.5}) {
    const ModalityBlock block{1, Tensor::vector({c})};
    SamplerConfig s;
    s.n_steps = 250;
    s.seed = 4;
    const Tensor out = conditional_generate(kDefault, s, bivariate_oracle(), layout, part,
                                            std::span(&block, 1), 10000);
    const auto m = column_moments(out, 0);
    EXPECT_NEAR(m.mean, kRho * c, 0.03) << c;
    EXPECT_NEAR(m.variance / (1 - kRho * kRho), 1.0, 0.05) << c;
  }
}

TEST(ConditionalGenerate, FrozenBlocksBitExactAtEveryStep) {
  Rng rng(5);
  for (std::size_t m : {2u, 3u}) {
    const auto layout = scalar_layout(m);
    const auto part = SubsetPartition::from_conditioning(m, {m - 1});
    const Tensor values = rng.normal_tensor({8, 1});
    const std::vector<ModalityBlock> cond{{m - 1, values}};
    std::size_t checked = 0;
    SamplerConfig s;
    s.n_steps = 20;
    s.repaint = RepaintConfig{2, 5};
    const Tensor out = conditional_generate(
        kDefault, s,
        oracle_score_fn(std::vector<double>(m, 0.0), std::vector<double>(m, 1.0), kDefault),
        layout, part, cond, 8, [&](const SamplerStep& step) {
          for (std::size_t r = 0; r < 8; ++r) {
            ASSERT_EQ(step.state->at(r, m - 1), values.at(r, 0));
          }
          ++checked;
        });
    EXPECT_EQ(checked, 40u);
    for (std::size_t r = 0; r < 8; ++r) EXPECT_EQ(out.at(r, m - 1), values.at(r, 0));
  }
}

TEST(ConditionalGenerate, EmptyConditioningEqualsJoint) {
  const auto layout = scalar_layout(2);
  SamplerConfig s;
  s.n_steps = 30;
  s.seed = 6;
  const auto score = bivariate_oracle();
  const Tensor joint = joint_generate(kDefault, s, score, layout, 16);
  const auto part = SubsetPartition::unconditional(2);
  EXPECT_TRUE(conditional_generate(kDefault, s, score, layout, part, {}, 16) == joint);
  EXPECT_TRUE(inpaint_conditional_generate(kDefault, s, score, layout, part, {}, 16) ==
              joint);
}

TEST(ConditionalGenerate, RejectsMismatchedConditioning) {
  const auto layout = scalar_layout(2);
  const auto part = SubsetPartition::from_generated(2, {0});
  const auto score = bivariate_oracle();
  EXPECT_THROW(conditional_generate(kDefault, {}, score, layout, part, {}, 4), ConfigError);
  const ModalityBlock wrong{0, Tensor::vector({1.0})};
  EXPECT_THROW(conditional_generate(kDefault, {}, score, layout, part, std::span(&wrong, 1), 4),
               ConfigError);
  const ModalityBlock rows{1, Tensor({3, 1})};
  EXPECT_THROW(conditional_generate(kDefault, {}, score, layout, part, std::span(&rows, 1), 4),
               ShapeError);
  EXPECT_THROW(conditional_generate(kDefault, {}, score, scalar_layout(3), part, {}, 4),
               ConfigError);
}

TEST(InpaintGenerate, RediffusedBlockMatchesKernel) {
  // The state handed to the score function carries the conditioning block
  // freshly diffused to t'.
  const auto layout = scalar_layout(2);
  const auto part = SubsetPartition::from_generated(2, {0});
  const double c = 1.5;
  const ModalityBlock block{1, Tensor::vector({c})};
  const std::size_t probe = 100;
  std::size_t calls = 0;
  Tensor seen;
  double probe_t = 0.0;
  const auto inner = bivariate_oracle();
  const ScoreFn spy = [&](const Tensor& state, const MultiTimeVector& tau) {
    if (calls++ == probe) {
      seen = state;
      probe_t = tau.times[0];
      EXPECT_EQ(tau.times[0], tau.times[1]);
    }
    return inner(state, tau);
  };
  SamplerConfig s;
  s.n_steps = 250;
  s.seed = 7;
  inpaint_conditional_generate(kDefault, s, spy, layout, part, std::span(&block, 1), 20000);
  const auto k = kernel(kDefault, probe_t);
  const auto m = column_moments(seen, 1);
  EXPECT_NEAR(m.mean, k.mean_coeff * c, 0.02);
  EXPECT_NEAR(m.variance / k.variance, 1.0, 0.03);
}

TEST(InpaintGenerate, ExactScoreWithRepaintApproximatesConditional) {
  const auto layout = scalar_layout(2);
  const auto part = SubsetPartition::from_generated(2, {0});
  const double c = 1.0;
  const ModalityBlock block{1, Tensor::vector({c})};
  SamplerConfig s;
  s.n_steps = 250;
  s.repaint = RepaintConfig{10, 10};
  s.seed = 8;
  const Tensor out = inpaint_conditional_generate(kDefault, s, bivariate_oracle(), layout,
                                                  part, std::span(&block, 1), 4000);
  const auto m = column_moments(out, 0);
  EXPECT_NEAR(m.mean / (kRho * c), 1.0, 0.2);
  EXPECT_NEAR(m.variance / (1 - kRho * kRho), 1.0, 0.2);
  for (std::size_t r = 0; r < out.rows(); ++r) EXPECT_EQ(out.at(r, 1), c);
}

TEST(Repaint, JumpBacksPreserveMarginals) {
  // Data N(2, 0.25): after the step at t' the state should follow the
  // time-(t' - dt) marginal N(2a, 0.25 a^2 + sigma^2) on every replay.
  const std::vector<double> mean{2.0}, cov{0.25};
  SamplerConfig s;
  s.n_steps = 100;
  s.repaint = RepaintConfig{4, 10};
  s.seed = 11;
  const double dt = 1.0 / 100.0;
  std::size_t checked = 0;
  joint_generate(kDefault, s, oracle_score_fn(mean, cov, kDefault), scalar_layout(1), 10000,
                 [&](const SamplerStep& step) {
                   if (step.step_index % 10 != 4 || step.step_index + 1 == 100) return;
                   const auto k = kernel(kDefault, step.t_prime - dt);
                   const double var = 0.25 * k.mean_coeff * k.mean_coeff + k.variance;
                   const auto m = column_moments(*step.state, 0);
                   // The target mean is near zero early on; compare it in std units.
                   EXPECT_LT(std::abs(m.mean - 2.0 * k.mean_coeff) / std::sqrt(var), 0.1)
                       << step.iteration;
                   EXPECT_NEAR(m.variance / var, 1.0, 0.1) << step.iteration;
                   ++checked;
                 });
  EXPECT_EQ(checked, 40u);
}

}  // namespace
}  // namespace mld
