#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "mld/diffusion.hpp"
#include "mld/error.hpp"
#include "mld/training.hpp"
#include "support/oracles.hpp"

namespace mld {
namespace {

const DiffusionConfig kDefault{};

ModalityLayout layout_of(const std::vector<std::size_t>& dims) {
  std::vector<ModalitySpec> specs;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    specs.push_back({"m" + std::to_string(i), dims[i], dims[i]});
  }
  return ModalityLayout(specs);
}

ScoreNetConfig small_net(std::size_t width = 16) {
  ScoreNetConfig c;
  c.width = width;
  c.blocks = 1;
  c.time_embed = 4;
  c.seed = 3;
  return c;
}

TEST(Beta, EndpointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(beta(kDefault, 0.0), 0.1);
  EXPECT_DOUBLE_EQ(beta(kDefault, 1.0), 20.0);
  EXPECT_NEAR(beta(kDefault, 0.5), 10.05, 1e-14);
  EXPECT_THROW(beta(kDefault, -0.01), ConfigError);
  EXPECT_THROW(beta(kDefault, 1.01), ConfigError);
}

TEST(DiffusionConfig, Validation) {
  DiffusionConfig c;
  c.beta_min = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.beta_max = 0.05;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.d = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.n_steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.t_eps = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Kernel, InitialCondition) {
  const auto k = kernel(kDefault, 0.0);
  EXPECT_EQ(k.mean_coeff, 1.0);
  EXPECT_EQ(k.variance, 0.0);
}

TEST(Kernel, AtHorizon) {
  const auto k = kernel(kDefault, 1.0);
  // Exponent -(20 - 0.1)/4 - 0.1/2 = -5.025.
  EXPECT_NEAR(k.mean_coeff, std::exp(-5.025), 1e-17);
  EXPECT_NEAR(k.mean_coeff, 6.57e-3, 5e-6);
  EXPECT_NEAR(k.variance, 1.0 - std::exp(-10.05), 1e-15);
  EXPECT_NEAR(k.variance, 0.99996, 1e-5);
}

TEST(Kernel, VariancePreservedAndMonotone) {
  double prev_a = 2.0, prev_v = -1.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = i / 999.0;
    const auto k = kernel(kDefault, t);
    EXPECT_NEAR(k.mean_coeff * k.mean_coeff + k.variance, 1.0, 1e-12) << t;
    EXPECT_NEAR(k.mean_coeff, testing::ref_mean_coeff(0.1, 20.0, t), 1e-15);
    EXPECT_LT(k.mean_coeff, prev_a);
    EXPECT_GT(k.variance, prev_v);
    prev_a = k.mean_coeff;
    prev_v = k.variance;
  }
}

TEST(Kernel, BetweenComposes) {
  // q(u | s) followed from q(s | 0) reproduces q(u | 0).
  for (auto [s, u] : {std::pair{0.1, 0.4}, {0.3, 0.9}, {0.0, 0.5}, {0.6, 0.6}}) {
    const auto ks = kernel(kDefault, s);
    const auto ku = kernel(kDefault, u);
    const auto kb = kernel_between(kDefault, s, u);
    EXPECT_NEAR(kb.mean_coeff * ks.mean_coeff, ku.mean_coeff, 1e-14);
    EXPECT_NEAR(kb.mean_coeff * kb.mean_coeff * ks.variance + kb.variance, ku.variance,
                1e-14);
  }
  EXPECT_THROW(kernel_between(kDefault, 0.5, 0.4), ConfigError);
}

TEST(Kernel, ForwardSimulationMatchesMoments) {
  // Reduced version of the acceptance run: 2000 paths, 4 coordinates.
  const auto moments = testing::simulate_forward(
      0.1, 20.0,
      [](double t) {
        const auto k = kernel(kDefault, t);
        return std::pair{k.mean_coeff, k.variance};
      },
      {1.5, -0.5, 0.0, 2.0}, {0.25, 0.5, 1.0}, 2000, 2000, 42);
  for (const auto& m : moments) {
    EXPECT_LT(std::abs(m.mean_error), 0.05) << m.t;
    EXPECT_NEAR(m.variance_ratio, 1.0, 0.05) << m.t;
  }
}

TEST(Diffuse, IdentityAtZeroAndDriftWithoutNoise) {
  Rng rng(1);
  const Tensor z = rng.normal_tensor({3, 4});
  const Tensor noise = rng.normal_tensor({3, 4});
  EXPECT_TRUE(diffuse(kDefault, z, 0.0, noise) == z);
  const Tensor r = diffuse(kDefault, z, 0.4, Tensor::zeros_like(z));
  const double a = kernel(kDefault, 0.4).mean_coeff;
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(r[i], a * z[i]);
  EXPECT_THROW(diffuse(kDefault, z, 0.4, Tensor({3, 3})), ShapeError);
}

TEST(Diffuse, StandardNormalStaysStandardNormal) {
  Rng rng(2);
  const std::size_t n = 100000;
  for (double t : {0.1, 0.5, 0.9}) {
    const Tensor z = rng.normal_tensor({n, 2});
    const Tensor r = diffuse(kDefault, z, t, rng.normal_tensor({n, 2}));
    const auto mean = column_mean(r);
    const auto cov = column_covariance(r);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_LT(std::abs(mean[j]), 0.015) << t;
      EXPECT_NEAR(cov.at(j, j), 1.0, 0.02) << t;
    }
    EXPECT_LT(std::abs(cov.at(0, 1)), 0.015) << t;
  }
}

std::map<std::vector<std::size_t>, double> partition_frequencies(
    const DiffusionConfig& c, std::size_t m, std::size_t draws, std::uint64_t seed) {
  Rng rng(seed);
  std::map<std::vector<std::size_t>, double> freq;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto p = sample_partition(c, m, rng);
    EXPECT_FALSE(p.a1.empty());
    freq[p.a2] += 1.0 / static_cast<double>(draws);
  }
  return freq;
}

TEST(SamplePartition, AlwaysUnconditionalWhenDIsOne) {
  DiffusionConfig c;
  c.d = 1.0;
  const auto freq = partition_frequencies(c, 3, 1000, 1);
  ASSERT_EQ(freq.size(), 1u);
  EXPECT_TRUE(freq.begin()->first.empty());
}

TEST(SamplePartition, TwoModalitiesHalfUnconditional) {
  DiffusionConfig c;
  c.d = 0.5;
  auto freq = partition_frequencies(c, 2, 100000, 2);
  EXPECT_EQ(freq.size(), 3u);
  EXPECT_NEAR(freq[{}], 0.5, 0.01);
  EXPECT_NEAR((freq[{0}]), 0.25, 0.01);
  EXPECT_NEAR((freq[{1}]), 0.25, 0.01);
  EXPECT_EQ(freq.count({0, 1}), 0u);
}

TEST(SamplePartition, ThreeModalitiesUniformOverProperSubsets) {
  DiffusionConfig c;
  c.d = 0.0;
  const auto freq = partition_frequencies(c, 3, 100000, 3);
  EXPECT_EQ(freq.size(), 6u);
  for (const auto& [a2, f] : freq) {
    EXPECT_FALSE(a2.empty());
    EXPECT_LT(a2.size(), 3u);
    EXPECT_NEAR(f, 1.0 / 6.0, 0.01);
  }
}

TEST(SamplePartition, SingleModalityFallsBackToUnconditional) {
  DiffusionConfig c;
  c.d = 0.0;
  Rng rng(4);
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(sample_partition(c, 1, rng).a2.empty());
}

TEST(Omega, ClosedFormCases) {
  const auto two = layout_of({16, 64});
  EXPECT_EQ(omega(two, SubsetPartition::unconditional(2)), 1.0);
  EXPECT_EQ(omega(two, SubsetPartition::from_generated(2, {0})), 5.0);
  const auto equal = layout_of({8, 8});
  EXPECT_EQ(omega(equal, SubsetPartition::from_generated(2, {1})), 2.0);
  EXPECT_THROW(omega(two, SubsetPartition::from_generated(2, {})), ConfigError);
}

TEST(OmegaAndNu, ExhaustiveUpToFourModalities) {
  for (std::size_t m = 1; m <= 4; ++m) {
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < m; ++i) dims.push_back(i + 1);
    const auto layout = layout_of(dims);
    for (double d : {0.0, 0.3, 1.0}) {
      DiffusionConfig c;
      c.d = d;
      double total = 0.0;
      for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << m); ++bits) {
        std::vector<std::size_t> a2;
        double dim_a2 = 0.0, dim_a1 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          if ((bits >> i) & 1) {
            a2.push_back(i);
            dim_a2 += static_cast<double>(dims[i]);
          } else {
            dim_a1 += static_cast<double>(dims[i]);
          }
        }
        const double p = partition_probability(c, m, a2);
        total += p;
        if (a2.size() == m) {
          EXPECT_EQ(p, 0.0);
          continue;
        }
        if (m == 1) {
          EXPECT_EQ(p, 1.0);
        } else if (a2.empty()) {
          EXPECT_EQ(p, d);
        } else {
          EXPECT_NEAR(p, (1.0 - d) / (std::pow(2.0, m) - 2.0), 1e-15);
        }
        const auto part = SubsetPartition::from_conditioning(m, a2);
        EXPECT_NEAR(omega(layout, part), 1.0 + dim_a2 / dim_a1, 1e-15);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(GaussianScoreOracle, StandardNormalGivesMinusR) {
  Rng rng(5);
  const Tensor r = rng.normal_tensor({4, 3});
  const std::vector<double> mean(3, 0.0), cov(3, 1.0);
  for (double t : {0.05, 0.5, 1.0}) {
    const Tensor s = gaussian_score_oracle(mean, cov, kDefault, r, t);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(s[i], -r[i], 1e-12);
  }
}

TEST(GaussianScoreOracle, TimeZeroIsInitialScore) {
  const std::vector<double> mean{1.0, -2.0}, cov{4.0, 0.25};
  const Tensor r = Tensor::vector({3.0, 0.0});
  const Tensor s = gaussian_score_oracle(mean, cov, kDefault, r, 0.0);
  EXPECT_DOUBLE_EQ(s[0], -(3.0 - 1.0) / 4.0);
  EXPECT_DOUBLE_EQ(s[1], -(0.0 + 2.0) / 0.25);
}

TEST(GaussianScoreOracle, ShiftedOneDimensional) {
  const std::vector<double> mean{2.0}, cov{1.0};
  for (double t : {0.2, 0.7}) {
    const double a = kernel(kDefault, t).mean_coeff;
    for (double r : {-1.0, 0.5, 3.0}) {
      const Tensor s = gaussian_score_oracle(mean, cov, kDefault, Tensor::vector({r}), t);
      EXPECT_NEAR(s[0], -(r - 2.0 * a), 1e-12);
    }
  }
}

TEST(TrainingStep, DIsOneUsesFullMaskAndUnitOmega) {
  DiffusionConfig c;
  c.d = 1.0;
  ScoreNetwork net(layout_of({2, 3}), small_net());
  Rng rng(6);
  const Tensor z = rng.normal_tensor({16, 5});
  for (int i = 0; i < 5; ++i) {
    const auto o = training_step(c, net, z, rng);
    EXPECT_TRUE(o.partition.a2.empty());
    EXPECT_EQ(o.omega, 1.0);
    EXPECT_TRUE(std::isfinite(o.loss));
    EXPECT_EQ(o.times.size(), 16u);
    for (double t : o.times) {
      EXPECT_GE(t, c.t_eps);
      EXPECT_LE(t, c.horizon);
    }
  }
}

TEST(TrainingStep, FrozenBlocksAreBitExact) {
  const auto layout = layout_of({2, 3, 1});
  ScoreNetwork net(layout, small_net());
  Rng rng(7);
  const Tensor z = rng.normal_tensor({8, 6});
  const auto part = SubsetPartition::from_conditioning(3, {1});
  std::vector<double> times(8);
  for (auto& t : times) t = rng.uniform(0.01, 1.0);
  const auto batch = make_masked_batch(kDefault, layout, z, part, times,
                                       rng.normal_tensor({8, 6}));
  EXPECT_EQ(batch.omega, 1.0 + 3.0 / 3.0);
  const auto res = denoising_loss(net, kDefault, batch);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t j = 2; j < 5; ++j) EXPECT_EQ(res.state.at(r, j), z.at(r, j));
    EXPECT_NE(res.state.at(r, 0), z.at(r, 0));
    EXPECT_EQ(batch.times.at(r, 1), 0.0);
    EXPECT_EQ(batch.times.at(r, 0), times[r]);
  }
  // Network input carries the conditioning values verbatim.
  const Tensor input = net.build_input(res.state, batch.times);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t j = 2; j < 5; ++j) EXPECT_EQ(input.at(r, j), z.at(r, j));
  }
}

TEST(TrainingStep, FrozenCoordinatesDoNotEnterLoss) {
  const auto layout = layout_of({2, 2});
  ScoreNetwork net(layout, small_net());
  Rng rng(8);
  const Tensor z = rng.normal_tensor({6, 4});
  const auto part = SubsetPartition::from_conditioning(2, {0});
  const std::vector<double> times{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  Tensor noise = rng.normal_tensor({6, 4});
  const auto b1 = make_masked_batch(kDefault, layout, z, part, times, noise);
  for (std::size_t r = 0; r < 6; ++r) {
    noise.at(r, 0) += 10.0;
    noise.at(r, 1) -= 3.0;
  }
  const auto b2 = make_masked_batch(kDefault, layout, z, part, times, noise);
  const auto l1 = denoising_loss(net, kDefault, b1);
  const auto l2 = denoising_loss(net, kDefault, b2);
  EXPECT_EQ(l1.loss, l2.loss);
  for (std::size_t i = 0; i < l1.grads.tensors().size(); ++i) {
    EXPECT_TRUE(*l1.grads.tensors()[i] == *l2.grads.tensors()[i]);
  }
}

TEST(TrainingStep, LossGradientsMatchFiniteDifferences) {
  const auto layout = layout_of({1, 2});
  ScoreNetwork net(layout, small_net(6));
  Rng rng(9);
  const Tensor z = rng.normal_tensor({3, 3});
  const auto batch = make_masked_batch(kDefault, layout, z,
                                       SubsetPartition::from_conditioning(2, {1}),
                                       std::vector<double>{0.2, 0.5, 0.8},
                                       rng.normal_tensor({3, 3}));
  const auto res = denoising_loss(net, kDefault, batch);
  auto grads = res.grads.tensors();
  auto params = net.params().tensors();
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k]->size(); i += 3) {
      const double saved = (*params[k])[i];
      (*params[k])[i] = saved + 1e-6;
      const double plus = denoising_loss(net, kDefault, batch).loss;
      (*params[k])[i] = saved - 1e-6;
      const double minus = denoising_loss(net, kDefault, batch).loss;
      (*params[k])[i] = saved;
      const double fd = (plus - minus) / 2e-6;
      worst = std::max(worst, std::abs(fd - (*grads[k])[i]) / (std::abs(fd) + 1e-7));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(TrainingStep, NonFiniteLossAbortsWithoutUpdating) {
  ScoreNetwork net(layout_of({2}), small_net());
  const auto before = net.params();
  Tensor z({4, 2}, 1.0);
  z.at(1, 1) = std::nan("");
  Rng rng(10);
  EXPECT_THROW(training_step(kDefault, net, z, rng), NumericError);
  for (std::size_t i = 0; i < before.tensors().size(); ++i) {
    EXPECT_TRUE(*before.tensors()[i] == *net.params().tensors()[i]);
  }
}

TEST(TrainingStep, LearnsStandardNormalScore) {
  const auto layout = layout_of({1});
  auto cfg = small_net(32);
  cfg.blocks = 2;
  ScoreNetwork net(layout, cfg);
  Rng data_rng(11);
  const Tensor z = data_rng.normal_tensor({4000, 1});
  ScoreTrainingOptions opt;
  opt.mode = ScoreTrainingMode::kUnconditional;
  opt.steps = 2500;
  opt.batch_size = 128;
  opt.seed = 12;
  train_score_network(kDefault, net, z, opt);
  Rng eval_rng(13);
  for (double t : {0.3, 0.5, 0.7}) {
    const Tensor r = eval_rng.normal_tensor({1000, 1});
    const Tensor s = net.score(kDefault, r, broadcast_times({{t}}, 1000), true);
    double err = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
      err += (s[i] + r[i]) * (s[i] + r[i]);
      norm += r[i] * r[i];
    }
    EXPECT_LT(std::sqrt(err / norm), 0.2) << t;
  }
}

TEST(UniDiffuser, SingleModalityEqualsUnconditionalStep) {
  const auto layout = layout_of({3});
  DiffusionConfig c;
  c.d = 1.0;
  ScoreNetwork a(layout, small_net());
  ScoreNetwork b(layout, small_net());
  Rng data(14);
  const Tensor z = data.normal_tensor({10, 3});
  Rng r1(15), r2(15);
  for (int i = 0; i < 3; ++i) {
    const auto oa = training_step(c, a, z, r1);
    const auto ob = unidiffuser_training_step(c, b, z, r2);
    EXPECT_EQ(oa.loss, ob.loss);
    EXPECT_EQ(oa.times, ob.times);
  }
  for (std::size_t i = 0; i < a.params().tensors().size(); ++i) {
    EXPECT_TRUE(*a.params().tensors()[i] == *b.params().tensors()[i]);
  }
}

TEST(UniDiffuser, EqualTimesGiveUnconditionalLoss) {
  const auto layout = layout_of({2, 1});
  ScoreNetwork net(layout, small_net());
  Rng rng(16);
  const Tensor z = rng.normal_tensor({5, 3});
  const Tensor noise = rng.normal_tensor({5, 3});
  const std::vector<double> t{0.1, 0.3, 0.5, 0.7, 0.9};
  Tensor times({5, 2});
  for (std::size_t r = 0; r < 5; ++r) times.at(r, 0) = times.at(r, 1) = t[r];
  const auto uni = make_unidiffuser_batch(layout, z, times, noise);
  const auto masked = make_masked_batch(kDefault, layout, z,
                                        SubsetPartition::unconditional(2), t, noise);
  EXPECT_EQ(denoising_loss(net, kDefault, uni).loss,
            denoising_loss(net, kDefault, masked).loss);
}

TEST(UniDiffuser, PerModalityTimesAreIndependent) {
  const auto layout = layout_of({1, 1});
  ScoreNetwork net(layout, small_net(4));
  Rng rng(17);
  const Tensor z = rng.normal_tensor({1, 2});
  std::vector<double> t0, t1;
  for (int i = 0; i < 10000; ++i) {
    const auto o = unidiffuser_training_step(kDefault, net, z, rng);
    ASSERT_EQ(o.times.size(), 2u);
    t0.push_back(o.times[0]);
    t1.push_back(o.times[1]);
  }
  const double m0 = testing::sample_mean(t0), m1 = testing::sample_mean(t1);
  double cov = 0.0;
  for (std::size_t i = 0; i < t0.size(); ++i) cov += (t0[i] - m0) * (t1[i] - m1);
  cov /= static_cast<double>(t0.size() - 1);
  const double corr =
      cov / std::sqrt(testing::sample_variance(t0) * testing::sample_variance(t1));
  EXPECT_LT(std::abs(corr), 0.04);
}

}  // namespace
}  // namespace mld
