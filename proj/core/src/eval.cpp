#include "mld/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "mld/error.hpp"
#include "mld/optim.hpp"

namespace mld {

namespace {

void check_labels(std::span<const std::int64_t> labels, std::size_t classes,
                  std::size_t rows) {
  if (labels.size() != rows) {
    throw ShapeError("label count " + std::to_string(labels.size()) +
                     " != sample count " + std::to_string(rows));
  }
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
  }
}

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd to_eigen(const Tensor& t) {
  return Eigen::Map<const RowMatrix>(t.data(),
                                     static_cast<Eigen::Index>(t.rows()),
                                     static_cast<Eigen::Index>(t.cols()));
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  const Eigen::VectorXd ev = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * ev.asDiagonal() *
         solver.eigenvectors().transpose();
}

}  // namespace

TinyClassifier train_classifier(const Tensor& data,
                                std::span<const std::int64_t> labels,
                                std::size_t classes,
                                const ClassifierConfig& config) {
  if (classes == 0) throw ConfigError("classifier needs at least one class");
  if (data.rank() != 2 || data.rows() == 0) {
    throw ConfigError("classifier needs a non-empty [n, dim] dataset");
  }
  if (config.epochs == 0 || config.batch_size == 0) {
    throw ConfigError("classifier epochs and batch_size must be >= 1");
  }
  check_labels(labels, classes, data.rows());
  Rng rng(config.seed);
  std::vector<std::size_t> dims{data.cols()};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(classes);
  TinyClassifier clf{make_mlp(dims, Activation::kSilu, rng), classes};
  auto opt = AdamState::for_params(clf.net, {.lr = config.lr});

  const std::size_t n = data.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::min(config.batch_size, n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto tape = mlp_forward_tape(clf.net, gather_rows(data, idx));
      const Tensor& logits = tape.output;
      Tensor upstream = Tensor::zeros_like(logits);
      const double scale = 1.0 / static_cast<double>(idx.size());
      double loss = 0.0;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto row = logits.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const auto y = static_cast<std::size_t>(labels[idx[r]]);
        loss -= (row[y] - mx - std::log(z)) * scale;
        for (std::size_t k = 0; k < classes; ++k) {
          const double p = std::exp(row[k] - mx) / z;
          upstream.at(r, k) = (p - (k == y ? 1.0 : 0.0)) * scale;
        }
      }
      if (!std::isfinite(loss)) {
        throw NumericError("classifier: non-finite loss at epoch " +
                           std::to_string(epoch));
      }
      adam_step(opt, clf.net, mlp_backward(clf.net, tape, upstream).params);
    }
  }
  return clf;
}

std::vector<std::int64_t> predict(const TinyClassifier& clf,
                                  const Tensor& data) {
  const Tensor logits = mlp_forward(clf.net, data);
  const std::size_t n = logits.rows();
  std::vector<std::int64_t> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = logits.row(r);
    out[r] = std::max_element(row.begin(), row.end()) - row.begin();
  }
  return out;
}

double accuracy(const TinyClassifier& clf, const Tensor& data,
                std::span<const std::int64_t> labels) {
  return conditional_coherence(predict(clf, data), labels);
}

Tensor embed(const TinyClassifier& clf, const Tensor& data) {
  return mlp_forward_blocks(clf.net, data, clf.net.blocks.size() - 1);
}

double conditional_coherence(std::span<const std::int64_t> predicted,
                             std::span<const std::int64_t> target) {
  if (predicted.empty()) throw ConfigError("coherence of an empty sample set");
  if (predicted.size() != target.size()) {
    throw ShapeError("coherence: prediction/label count mismatch");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    hits += predicted[i] == target[i];
  }
  return 100.0 * static_cast<double>(hits) /
         static_cast<double>(predicted.size());
}

double conditional_coherence(const TinyClassifier& clf,
                             const Tensor& generated,
                             std::span<const std::int64_t> target) {
  return conditional_coherence(predict(clf, generated), target);
}

double joint_coherence(std::span<const std::vector<std::int64_t>> predicted) {
  if (predicted.empty() || predicted[0].empty()) {
    throw ConfigError("coherence of an empty sample set");
  }
  const std::size_t n = predicted[0].size();
  for (const auto& p : predicted) {
    if (p.size() != n) throw ShapeError("joint coherence: size mismatch");
  }
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool all = true;
    for (const auto& p : predicted) all = all && p[i] == predicted[0][i];
    agree += all;
  }
  return 100.0 * static_cast<double>(agree) / static_cast<double>(n);
}

double joint_coherence(std::span<const TinyClassifier> classifiers,
                       std::span<const Tensor> generated) {
  if (classifiers.size() != generated.size()) {
    throw ConfigError("joint coherence: one classifier per modality required");
  }
  std::vector<std::vector<std::int64_t>> predicted;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    predicted.push_back(predict(classifiers[i], generated[i]));
  }
  return joint_coherence(predicted);
}

GaussianStats gaussian_stats(const Tensor& embeddings) {
  return {column_mean(embeddings), column_covariance(embeddings)};
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const std::size_t k = a.mean.size();
  if (b.mean.size() != k || a.cov.rows() != k || a.cov.cols() != k ||
      b.cov.rows() != k || b.cov.cols() != k) {
    throw ShapeError("frechet_distance: embedding dims differ");
  }
  double mean_term = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_term += d * d;
  }
  const Eigen::MatrixXd s1 = to_eigen(a.cov);
  const Eigen::MatrixXd s2 = to_eigen(b.cov);
  const Eigen::MatrixXd r1 = psd_sqrt(s1);
  const Eigen::MatrixXd cross = psd_sqrt(r1 * s2 * r1);
  const double value = mean_term + s1.trace() + s2.trace() - 2.0 * cross.trace();
  return std::max(0.0, value);
}

std::vector<RobustnessPoint> robustness_scan(
    const DiffusionConfig& config, std::span<const AutoencoderPair> autoencoders,
    std::span<const LatentNormalizer> normalizers,
    std::span<const TinyClassifier> classifiers, std::span<const Tensor> data,
    std::span<const std::int64_t> labels, std::span<const double> t_grid,
    Rng& rng) {
  const std::size_t m = data.size();
  if (autoencoders.size() != m || normalizers.size() != m ||
      classifiers.size() != m) {
    throw ConfigError("robustness_scan: one autoencoder, normalizer and "
                      "classifier per modality required");
  }
  std::vector<Tensor> latents;
  for (std::size_t i = 0; i < m; ++i) {
    latents.push_back(encode(autoencoders[i], normalizers[i], data[i]));
  }
  std::vector<RobustnessPoint> out;
  for (double t : t_grid) {
    RobustnessPoint point{t, {}, labels.size()};
    for (std::size_t i = 0; i < m; ++i) {
      const Tensor noise = rng.normal_tensor(latents[i].shape());
      const Tensor perturbed = diffuse(config, latents[i], t, noise);
      const Tensor decoded = decode(autoencoders[i], normalizers[i], perturbed);
      point.coherence.push_back(
          conditional_coherence(classifiers[i], decoded, labels));
    }
    out.push_back(std::move(point));
  }
  return out;
}

}  // namespace mld
