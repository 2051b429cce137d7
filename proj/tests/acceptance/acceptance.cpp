// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any hard criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mld/checkpoint.hpp"
#include "mld/cli/commands.hpp"
#include "mld/cli/pipeline.hpp"
#include "mld/cli/run_config.hpp"
#include "mld/data.hpp"
#include "mld/error.hpp"
#include "mld/eval.hpp"
#include "mld/gradcheck.hpp"
#include "mld/sampler.hpp"
#include "mld/training.hpp"
#include "support/oracles.hpp"

namespace {

using namespace mld;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

const fs::path kSourceDir = MLD_SOURCE_DIR;

struct Result {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// 1. Gradient suite over every network shape the shipped configs build.

Result gradient_suite() {
  const auto start = Clock::now();
  std::vector<std::pair<std::string, MlpParams>> shapes;
  Rng rng(101);
  for (const char* name : {"coherence.yaml", "quick.yaml"}) {
    const auto config = cli::load_run_config(kSourceDir / "configs" / name);
    for (const auto& spec : config.modality_specs()) {
      const auto ae = make_autoencoder(spec, config.autoencoder, rng);
      shapes.emplace_back(spec.name + " encoder", ae.encoder);
      shapes.emplace_back(spec.name + " decoder", ae.decoder);
      std::vector<std::size_t> dims{spec.data_dim};
      dims.insert(dims.end(), config.classifier.hidden.begin(), config.classifier.hidden.end());
      dims.push_back(config.data.classes);
      shapes.emplace_back(spec.name + " classifier",
                          make_mlp(dims, Activation::kSilu, rng));
    }
    shapes.emplace_back(std::string(name) + " score net",
                        ScoreNetwork(config.layout(), config.score).params());
  }
  // Score nets of criteria 3 and 5.
  shapes.emplace_back("4-d score net", ScoreNetwork(ModalityLayout({{"z", 4, 4}}), {}).params());
  ScoreNetConfig bivariate;
  bivariate.width = 64;
  shapes.emplace_back("bivariate score net",
                      ScoreNetwork(ModalityLayout({{"a", 1, 1}, {"b", 1, 1}}), bivariate).params());

  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, params] : shapes) {
    const double e = finite_diff_check(params, rng.normal_tensor({1, params.in_dim()}));
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-4 && secs < 10.0,
          fmt("%zu shapes, worst relative error %.2e (%s), %.1f s", shapes.size(), worst,
              worst_name.c_str(), secs)};
}

// ---------------------------------------------------------------------------
// 2. Kernel suite.

Result kernel_suite() {
  const auto start = Clock::now();
  const DiffusionConfig config;
  double identity = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto k = kernel(config, i / 999.0);
    identity = std::max(identity, std::abs(k.mean_coeff * k.mean_coeff + k.variance - 1.0));
  }
  // 10^4 paths, each with 24 independent coordinates started at distinct values.
  std::vector<double> z;
  for (int j = 0; j < 24; ++j) z.push_back(-2.0 + 4.0 * j / 23.0);
  const auto moments = testing::simulate_forward(
      config.beta_min, config.beta_max,
      [&](double t) {
        const auto k = kernel(config, t);
        return std::pair{k.mean_coeff, k.variance};
      },
      z, {0.25, 0.5, 1.0}, 10000, 4000, 202);
  bool ok = identity < 1e-12;
  std::string detail = fmt("max |a^2+s^2-1| %.1e;", identity);
  for (const auto& m : moments) {
    ok = ok && std::abs(m.mean_error) < 0.01 && std::abs(m.variance_ratio - 1.0) < 0.01;
    detail += fmt(" t=%.2f mean err %.4f sd, var ratio %.4f;", m.t, m.mean_error,
                  m.variance_ratio);
  }
  const double secs = seconds_since(start);
  return {ok && secs < 60.0, detail + fmt(" %.1f s", secs)};
}

// ---------------------------------------------------------------------------
// 3. Score recovery on 4-D standard normal latents.

Result score_recovery() {
  const auto start = Clock::now();
  const DiffusionConfig config;
  ScoreNetConfig net_config;
  net_config.width = 128;
  net_config.blocks = 2;
  net_config.seed = 303;
  ScoreNetwork net(ModalityLayout({{"z", 4, 4}}), net_config);
  Rng data_rng(304);
  const Tensor latents = data_rng.normal_tensor({20000, 4});
  ScoreTrainingOptions options;
  options.mode = ScoreTrainingMode::kUnconditional;
  options.steps = 5000;
  options.batch_size = 256;
  options.seed = 305;
  train_score_network(config, net, latents, options);

  Rng eval_rng(306);
  double total = 0.0, worst = 0.0;
  for (int i = 1; i <= 9; ++i) {
    const double t = 0.1 * i;
    const Tensor r = eval_rng.normal_tensor({2000, 4});
    const Tensor s = net.score(config, r, broadcast_times({{t}}, r.rows()), true);
    double err = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      err += (s[k] + r[k]) * (s[k] + r[k]);
      norm += r[k] * r[k];
    }
    const double rel = std::sqrt(err / norm);
    total += rel;
    worst = std::max(worst, rel);
  }
  const double mean = total / 9.0;
  const double secs = seconds_since(start);
  return {mean < 0.1 && secs < 300.0,
          fmt("mean relative error %.4f over t=0.1..0.9 (worst %.4f), %.1f s", mean, worst,
              secs)};
}

// ---------------------------------------------------------------------------
// 4. Oracle reversal.

Result oracle_reversal() {
  const auto start = Clock::now();
  const DiffusionConfig config;
  const std::vector<double> mean{1.0, -0.5, 0.0, 2.0}, cov{0.5, 1.0, 2.0, 0.25};
  SamplerConfig sampler;
  sampler.n_steps = 250;
  sampler.seed = 404;
  const Tensor out = joint_generate(config, sampler, oracle_score_fn(mean, cov, config),
                                    ModalityLayout({{"x", 4, 4}}), 10000);
  const auto mu = column_mean(out);
  const auto c = column_covariance(out);
  double mean_err = 0.0, cov_err = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    mean_err = std::max(mean_err, std::abs(mu[i] - mean[i]));
    for (std::size_t j = 0; j < 4; ++j) {
      // Relative on the diagonal; off-diagonal entries relative to the
      // geometric mean of the two variances.
      const double target = i == j ? cov[i] : 0.0;
      cov_err = std::max(cov_err, std::abs(c.at(i, j) - target) / std::sqrt(cov[i] * cov[j]));
    }
  }
  const double secs = seconds_since(start);
  return {mean_err < 0.05 && cov_err < 0.05 && secs < 120.0,
          fmt("max mean error %.4f, max covariance error %.2f%%, %.1f s", mean_err,
              100.0 * cov_err, secs)};
}

// ---------------------------------------------------------------------------
// 5. Conditional-Gaussian recovery with a trained multi-time network.

Result conditional_gaussian() {
  const auto start = Clock::now();
  const double rho = 0.8;
  DiffusionConfig config;
  config.d = 0.5;
  const ModalityLayout layout({{"a", 1, 1}, {"b", 1, 1}});
  ScoreNetConfig net_config;
  net_config.width = 64;
  net_config.blocks = 2;
  net_config.seed = 501;
  ScoreNetwork net(layout, net_config);
  Rng data_rng(502);
  Tensor data({50000, 2});
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double u = data_rng.normal(), v = data_rng.normal();
    data.at(i, 0) = u;
    data.at(i, 1) = rho * u + std::sqrt(1.0 - rho * rho) * v;
  }
  ScoreTrainingOptions options;
  options.steps = 10000;
  options.batch_size = 256;
  options.seed = 503;
  train_score_network(config, net, data, options);

  const auto score = network_score_fn(net, config);
  const auto partition = SubsetPartition::from_generated(2, {0});
  bool ok = true;
  std::string detail;
  for (double c : {-1.0, 0.0, 1.0}) {
    const ModalityBlock block{1, Tensor::vector({c})};
    SamplerConfig sampler;
    sampler.n_steps = 250;
    sampler.seed = 504;
    const Tensor out =
        conditional_generate(config, sampler, score, layout, partition, std::span(&block, 1),
                             10000);
    const auto col = testing::column(out, 0);
    const double m = testing::sample_mean(col), v = testing::sample_variance(col);
    const double target = rho * c;
    // At z2 = 0 the relative band collapses; use 15% of the |0.8 z2| = 0.8 scale.
    const bool mean_ok = c == 0.0 ? std::abs(m) < 0.12 : std::abs(m / target - 1.0) < 0.15;
    const bool var_ok = std::abs(v / (1.0 - rho * rho) - 1.0) < 0.15;
    ok = ok && mean_ok && var_ok;
    detail += fmt("z2=%+.0f mean %.3f (target %.2f) var %.3f; ", c, m, target, v);
  }
  const double secs = seconds_since(start);
  return {ok && secs < 600.0, detail + fmt(" %.1f s", secs)};
}

// ---------------------------------------------------------------------------
// 6. Frozen conditioning blocks.

Result frozen_blocks() {
  const auto start = Clock::now();
  const DiffusionConfig config;
  Rng rng(601);
  std::size_t runs = 0, checks = 0, violations = 0;
  for (const auto& dims : std::vector<std::vector<std::size_t>>{{2, 3}, {1, 2, 3}}) {
    std::vector<ModalitySpec> specs;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      specs.push_back({"m" + std::to_string(i), dims[i], dims[i]});
    }
    const ModalityLayout layout(specs);
    ScoreNetConfig net_config;
    net_config.width = 32;
    net_config.seed = 602;
    const ScoreNetwork net(layout, net_config);
    const auto score = network_score_fn(net, config);
    const std::size_t m = dims.size();
    for (std::uint64_t bits = 1; bits + 1 < (std::uint64_t{1} << m); ++bits) {
      std::vector<std::size_t> a2;
      for (std::size_t i = 0; i < m; ++i) {
        if ((bits >> i) & 1) a2.push_back(i);
      }
      const auto partition = SubsetPartition::from_conditioning(m, a2);
      std::vector<ModalityBlock> cond;
      for (auto i : a2) cond.push_back({i, rng.normal_tensor({16, dims[i]})});
      for (bool repaint : {false, true}) {
        SamplerConfig sampler;
        sampler.n_steps = 50;
        sampler.seed = 603 + bits;
        if (repaint) sampler.repaint = RepaintConfig{3, 10};
        auto check = [&](const Tensor& state) {
          for (const auto& block : cond) {
            const std::size_t off = layout.offset(block.modality);
            for (std::size_t r = 0; r < 16; ++r) {
              for (std::size_t j = 0; j < block.values.cols(); ++j) {
                ++checks;
                if (state.at(r, off + j) != block.values.at(r, j)) ++violations;
              }
            }
          }
        };
        const Tensor out = conditional_generate(
            config, sampler, score, layout, partition, cond, 16,
            [&](const SamplerStep& step) { check(*step.state); });
        check(out);
        ++runs;
      }
    }
  }
  return {violations == 0 && checks > 0,
          fmt("%zu sampling runs, %zu coordinate checks, %zu mismatches, %.1f s", runs, checks,
              violations, seconds_since(start))};
}

// ---------------------------------------------------------------------------
// 7, 8, 10. Full pipeline on the three-modality dataset.

struct Pipeline {
  cli::RunConfig config;
  cli::AutoencoderSet aes;
  std::optional<ScoreNetwork> net;
  std::vector<TinyClassifier> classifiers;
  MultiModalDataset test;
  double seconds = 0.0;
};

Pipeline run_pipeline() {
  const auto start = Clock::now();
  Pipeline p;
  p.config = cli::load_run_config(kSourceDir / "configs" / "coherence.yaml");
  const auto train = cli::generate_train_split(p.config);
  p.aes = cli::train_autoencoders(p.config, train);
  p.net.emplace(cli::train_score(p.config, p.config.diffusion, p.aes, train,
                                 ScoreTrainingMode::kMultiTime, {}));
  p.classifiers = cli::train_classifiers(p.config, train);
  p.test = cli::generate_test_split(p.config);
  p.seconds = seconds_since(start);
  return p;
}

std::vector<cli::EvalRow> coherence_rows(const Pipeline& p, cli::SampleMethod method) {
  cli::EvalOptions options;
  options.method = method;
  options.robustness = false;
  options.frechet = false;
  return cli::evaluate(p.config, p.config.diffusion, p.aes, *p.net, p.classifiers, p.test,
                       options);
}

Result end_to_end_coherence(const Pipeline& p, std::vector<cli::EvalRow>& rows) {
  const auto start = Clock::now();
  rows = coherence_rows(p, cli::SampleMethod::kMultiTime);
  double joint = 0.0, worst = 100.0;
  std::string worst_name;
  for (const auto& r : rows) {
    if (r.metric == "joint_coherence") joint = r.value;
    if (r.metric == "conditional_coherence" && r.value < worst) {
      worst = r.value;
      worst_name = r.modality + " | " + r.condition_set;
    }
  }
  const double secs = p.seconds + seconds_since(start);
  return {joint >= 90.0 && worst >= 90.0 && secs < 1200.0,
          fmt("joint %.1f%%, lowest conditional %.1f%% (%s), %.0f s end to end", joint, worst,
              worst_name.c_str(), secs)};
}

Result method_ordering(const Pipeline& p, const std::vector<cli::EvalRow>& multitime) {
  const auto inpaint = coherence_rows(p, cli::SampleMethod::kInpaint);
  const std::string hard = "c";
  bool ok = true;
  std::string detail;
  for (const auto& mt : multitime) {
    if (mt.metric != "conditional_coherence" || mt.condition_set != hard) continue;
    for (const auto& ip : inpaint) {
      if (ip.metric == mt.metric && ip.modality == mt.modality &&
          ip.condition_set == mt.condition_set) {
        ok = ok && mt.value >= ip.value;
        detail += fmt("%s | %s multi-time %.1f%% vs in-painting %.1f%%; ", mt.modality.c_str(),
                      hard.c_str(), mt.value, ip.value);
      }
    }
  }
  return {ok, detail + "soft check, not counted"};
}

Result robustness(const Pipeline& p) {
  auto config = p.config;
  config.eval.samples = 8000;
  const auto test = cli::generate_test_split(config);
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(0.1 * i);
  Rng rng(1001);
  const auto points = robustness_scan(config.diffusion, p.aes.pairs, p.aes.normalizers,
                                      p.classifiers, test.modalities, test.labels, grid, rng);
  const double n = static_cast<double>(test.size());
  const double chance = 100.0 / static_cast<double>(config.data.classes);
  const double se = std::sqrt(chance * (100.0 - chance) / n);
  bool ok = true;
  std::string detail;
  for (std::size_t m = 0; m < test.modality_count(); ++m) {
    const auto& pair = p.aes.pairs[m];
    const auto& norm = p.aes.normalizers[m];
    const Tensor recon = decode(pair, norm, encode(pair, norm, test.modalities[m]));
    const double recon_acc = accuracy(p.classifiers[m], recon, test.labels);
    const bool exact = points.front().coherence[m] == recon_acc;
    const double last = points.back().coherence[m];
    const bool at_chance = std::abs(last - chance) <= 3.0 * se;
    double largest_rise = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
      largest_rise =
          std::max(largest_rise, points[i].coherence[m] - points[i - 1].coherence[m]);
    }
    ok = ok && exact && at_chance && largest_rise <= 2.0;
    detail += fmt("%s: t=0 %.2f%% (recon %.2f%%), t=1 %.2f%%, largest rise %.2f; ",
                  test.names[m].c_str(), points.front().coherence[m], recon_acc, last,
                  largest_rise);
  }
  return {ok, detail + fmt("chance %.0f%%, 3 SE = %.2f", chance, 3.0 * se)};
}

// ---------------------------------------------------------------------------
// 9. Metric identities.

Result metric_identities() {
  auto stats1 = [](double mean, double var) {
    return GaussianStats{{mean}, Tensor({1, 1}, std::vector<double>{var})};
  };
  const GaussianStats a{{0.5, -1.0}, Tensor({2, 2}, std::vector<double>{2.0, 0.3, 0.3, 1.0})};
  const double same = frechet_distance(a, a);
  const double shift = frechet_distance(stats1(0, 1), stats1(1, 1));
  const double scale = frechet_distance(stats1(0, 1), stats1(0, 4));
  const bool fd_ok =
      std::abs(same) < 1e-8 && std::abs(shift - 1.0) < 1e-8 && std::abs(scale - 1.0) < 1e-8;
  const std::vector<std::int64_t> target(8, 3), other(8, 1);
  const std::vector<std::vector<std::int64_t>> agree{target, target}, disagree{target, other};
  const bool coh_ok = conditional_coherence(target, target) == 100.0 &&
                      conditional_coherence(std::vector<std::int64_t>{2},
                                            std::vector<std::int64_t>{0}) == 0.0 &&
                      joint_coherence(agree) == 100.0 && joint_coherence(disagree) == 0.0;
  bool empty_throws = false;
  try {
    conditional_coherence(std::vector<std::int64_t>{}, std::vector<std::int64_t>{});
  } catch (const ConfigError&) {
    empty_throws = true;
  }
  return {fd_ok && coh_ok && empty_throws,
          fmt("FD identical %.1e, mean shift %.12f, scale %.12f; coherence cases %s", same,
              shift, scale, coh_ok && empty_throws ? "exact" : "wrong")};
}

// ---------------------------------------------------------------------------
// 11. Persistence and CLI reproducibility.

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files[fs::relative(entry.path(), dir).string()] = read_file_bytes(entry.path());
    }
  }
  return files;
}

bool run_cli_pass(const fs::path& workdir) {
  fs::remove_all(workdir);
  setenv("MLD_WORKDIR", workdir.c_str(), 1);
  const std::string config = (kSourceDir / "configs" / "quick.yaml").string();
  const std::vector<std::vector<std::string>> commands{
      {"gen-data"},
      {"gen-data", "--split", "test", "-o", (workdir / "test.mmld").string()},
      {"train-ae"},
      {"train-score"},
      {"sample", "-n", "32", "--csv", (workdir / "samples.csv").string()},
      {"sample", "--condition", "a=" + (workdir / "test.mmld").string(), "--method", "inpaint",
       "--repaint", "-o", (workdir / "inpaint.mmld").string()},
      {"eval", "--test", (workdir / "test.mmld").string()},
      {"ablate-d", "--d-list", "1.0,0.5", "--test", (workdir / "test.mmld").string()},
  };
  bool ok = true;
  for (auto args : commands) {
    args.insert(args.begin(), "mld");
    args.insert(args.begin() + 2, {"-c", config});
    ok = ok && cli::run(args) == cli::kExitOk;
  }
  unsetenv("MLD_WORKDIR");
  return ok;
}

Result persistence() {
  const auto start = Clock::now();
  const fs::path root = fs::temp_directory_path() / "mld_acceptance";
  fs::create_directories(root);

  SyntheticConfig data_config;
  data_config.seed = 1101;
  data_config.samples_per_class = 50;
  data_config.modalities = {{"a", 6, 0.1}, ModalityDataConfig::hard("b", 8)};
  const auto data = generate_synthetic(data_config);
  save_dataset(data, root / "d1.mmld");
  save_dataset(load_dataset(root / "d1.mmld"), root / "d2.mmld");
  const bool dataset_ok = read_file_bytes(root / "d1.mmld") == read_file_bytes(root / "d2.mmld");

  ScoreNetConfig net_config;
  net_config.width = 32;
  ScoreNetwork net(ModalityLayout({{"a", 6, 3}, {"b", 8, 4}}), net_config);
  Rng rng(1102);
  ScoreTrainingOptions options;
  options.steps = 20;
  options.batch_size = 16;
  train_score_network(DiffusionConfig{}, net, rng.normal_tensor({64, 7}), options);
  const auto bytes = score_archive(net, DiffusionConfig{}).serialize();
  DiffusionConfig loaded_diffusion;
  const auto loaded = load_score_network(TensorArchive::deserialize(bytes), &loaded_diffusion);
  const bool checkpoint_ok = score_archive(loaded, loaded_diffusion).serialize() == bytes;

  const bool first = run_cli_pass(root / "run1");
  const bool second = run_cli_pass(root / "run2");
  const auto a = snapshot(root / "run1");
  const auto b = snapshot(root / "run2");
  const bool cli_ok = first && second && !a.empty() && a == b;
  fs::remove_all(root);
  return {dataset_ok && checkpoint_ok && cli_ok,
          fmt("dataset %s, score checkpoint %s, CLI pipeline %zu files %s, %.1f s",
              dataset_ok ? "byte-exact" : "differs", checkpoint_ok ? "byte-exact" : "differs",
              a.size(), cli_ok ? "identical across runs" : "differ", seconds_since(start))};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Result& r, bool hard = true) {
    std::printf("%s  criterion %d (%s): %s\n", r.pass ? "PASS" : "FAIL", id, name,
                r.detail.c_str());
    std::fflush(stdout);
    if (hard && !r.pass) ++failures;
  };
  auto guarded = [](const std::function<Result()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Result{false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "gradient suite", guarded(gradient_suite));
  report(2, "kernel suite", guarded(kernel_suite));
  report(3, "score recovery", guarded(score_recovery));
  report(4, "oracle reversal", guarded(oracle_reversal));
  report(5, "conditional Gaussian", guarded(conditional_gaussian));
  report(6, "frozen blocks", guarded(frozen_blocks));

  std::optional<Pipeline> pipeline;
  std::vector<cli::EvalRow> multitime_rows;
  const Result e2e = guarded([&] {
    pipeline.emplace(run_pipeline());
    return end_to_end_coherence(*pipeline, multitime_rows);
  });
  report(7, "end-to-end coherence", e2e);
  const Result ordering = pipeline ? guarded([&] { return method_ordering(*pipeline, multitime_rows); })
                                   : Result{false, "pipeline unavailable"};
  report(8, "method ordering", ordering, false);
  report(9, "metric identities", guarded(metric_identities));
  report(10, "robustness scan",
         pipeline ? guarded([&] { return robustness(*pipeline); })
                  : Result{false, "pipeline unavailable"});
  report(11, "persistence", guarded(persistence));

  std::printf("%d hard criteria failed\n", failures);
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
