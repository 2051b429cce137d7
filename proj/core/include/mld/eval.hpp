#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mld/autoencoder.hpp"
#include "mld/diffusion.hpp"
#include "mld/mlp.hpp"

namespace mld {

// Small MLP mapping one modality's data to class logits.
struct TinyClassifier {
  MlpParams net;
  std::size_t classes = 0;
};

struct ClassifierConfig {
  std::vector<std::size_t> hidden{64, 32};
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 3e-3;
  std::uint64_t seed = 0;
};

// Softmax cross-entropy training. `labels` must lie in [0, classes).
TinyClassifier train_classifier(const Tensor& data,
                                std::span<const std::int64_t> labels,
                                std::size_t classes,
                                const ClassifierConfig& config);

std::vector<std::int64_t> predict(const TinyClassifier& clf, const Tensor& data);
// Percentage of samples whose prediction equals the label.
double accuracy(const TinyClassifier& clf, const Tensor& data,
                std::span<const std::int64_t> labels);
// Activations of the last hidden layer.
Tensor embed(const TinyClassifier& clf, const Tensor& data);

// Percentage of predictions matching the target labels.
double conditional_coherence(std::span<const std::int64_t> predicted,
                             std::span<const std::int64_t> target);
double conditional_coherence(const TinyClassifier& clf, const Tensor& generated,
                             std::span<const std::int64_t> target);
// Percentage of samples on which every modality's prediction agrees.
double joint_coherence(std::span<const std::vector<std::int64_t>> predicted);
double joint_coherence(std::span<const TinyClassifier> classifiers,
                       std::span<const Tensor> generated);

struct GaussianStats {
  std::vector<double> mean;
  Tensor cov;  // [k, k]
};

GaussianStats gaussian_stats(const Tensor& embeddings);

// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}). The square root is taken
// as (S1^{1/2} S2 S1^{1/2})^{1/2}, both via symmetric eigendecomposition
// with negative eigenvalues clamped to zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct RobustnessPoint {
  double t = 0.0;
  std::vector<double> coherence;  // per modality, percent
  std::size_t samples = 0;
};

// For each t: encode, perturb with the kernel q(r | z, t), decode, classify,
// and compare with the ground-truth labels.
std::vector<RobustnessPoint> robustness_scan(
    const DiffusionConfig& config, std::span<const AutoencoderPair> autoencoders,
    std::span<const LatentNormalizer> normalizers,
    std::span<const TinyClassifier> classifiers, std::span<const Tensor> data,
    std::span<const std::int64_t> labels, std::span<const double> t_grid,
    Rng& rng);

}  // namespace mld
