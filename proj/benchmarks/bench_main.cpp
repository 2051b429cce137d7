#include <benchmark/benchmark.h>

#include "mld/eval.hpp"
#include "mld/mlp.hpp"
#include "mld/rng.hpp"
#include "mld/sampler.hpp"
#include "mld/score_network.hpp"
#include "mld/training.hpp"

namespace {

using namespace mld;

// Score net of the three-modality run: D = 16, M = 3.
const ModalityLayout& coherence_layout() {
  static const ModalityLayout layout({{"a", 8, 4}, {"b", 8, 4}, {"c", 16, 8}});
  return layout;
}

void BM_MlpForward(benchmark::State& state) {
  Rng rng(1);
  const auto width = static_cast<std::size_t>(state.range(0));
  const auto net = make_residual_mlp(64, width, 2, 16, Activation::kSilu, rng);
  const Tensor x = rng.normal_tensor({256, 64});
  for (auto _ : state) benchmark::DoNotOptimize(mlp_forward(net, x));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_MlpForward)->Arg(64)->Arg(128)->Arg(256);

void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const auto width = static_cast<std::size_t>(state.range(0));
  const auto net = make_residual_mlp(64, width, 2, 16, Activation::kSilu, rng);
  const Tensor x = rng.normal_tensor({256, 64});
  const Tensor up = rng.normal_tensor({256, 16});
  for (auto _ : state) benchmark::DoNotOptimize(mlp_backward(net, x, up));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(128)->Arg(256);

void BM_TrainingStep(benchmark::State& state) {
  ScoreNetConfig config;
  config.seed = 3;
  ScoreNetwork net(coherence_layout(), config);
  Rng rng(4);
  const Tensor latents = rng.normal_tensor({static_cast<std::size_t>(state.range(0)), 16});
  const DiffusionConfig diffusion;
  for (auto _ : state) benchmark::DoNotOptimize(training_step(diffusion, net, latents, rng));
}
BENCHMARK(BM_TrainingStep)->Arg(64)->Arg(256);

void BM_ConditionalSampling(benchmark::State& state) {
  ScoreNetConfig config;
  config.seed = 5;
  const ScoreNetwork net(coherence_layout(), config);
  DiffusionConfig diffusion;
  diffusion.n_steps = static_cast<std::size_t>(state.range(0));
  const auto score = network_score_fn(net, diffusion);
  const auto partition = SubsetPartition::from_conditioning(3, {2});
  Rng rng(6);
  const ModalityBlock block{2, rng.normal_tensor({256, 8})};
  SamplerConfig sampler;
  for (auto _ : state) {
    benchmark::DoNotOptimize(conditional_generate(diffusion, sampler, score, coherence_layout(),
                                                  partition, std::span(&block, 1), 256));
  }
  state.SetItemsProcessed(state.iterations() * 256 * state.range(0));
}
BENCHMARK(BM_ConditionalSampling)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_FrechetDistance(benchmark::State& state) {
  Rng rng(7);
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto a = gaussian_stats(rng.normal_tensor({2000, k}));
  const auto b = gaussian_stats(rng.normal_tensor({2000, k}));
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_FrechetDistance)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
