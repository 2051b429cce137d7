#include "mld/cli/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "mld/checkpoint.hpp"
#include "mld/cli/pipeline.hpp"
#include "mld/error.hpp"

namespace mld::cli {

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

RunConfig load(const Common& common) {
  auto config = load_run_config(common.config_path);
  if (common.seed) {
    config.seed = *common.seed;
    derive_seeds(config);
  }
  return config;
}

std::filesystem::path or_workdir(const RunConfig& config, const std::string& value,
                                 const char* fallback) {
  return value.empty() ? config.workdir / fallback : std::filesystem::path(value);
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

std::ofstream open_csv(const std::filesystem::path& path, const std::string& header) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  out << header << '\n';
  return out;
}

// --- gen-data -------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  std::string split = "train";
};

void gen_data(const Common& common, const GenDataArgs& args) {
  const auto config = load(common);
  const auto data = args.split == "test" ? generate_test_split(config)
                                         : generate_train_split(config);
  const auto out = or_workdir(config, args.out, args.split == "test" ? "test.mmld" : "data.mmld");
  ensure_parent(out);
  save_dataset(data, out);
  std::cout << "wrote " << data.size() << " samples x " << data.modality_count()
            << " modalities to " << out.string() << '\n';
}

// --- train-ae -------------------------------------------------------------

struct TrainAeArgs {
  std::string data;
  std::string out;
  std::string log;
};

void train_ae(const Common& common, const TrainAeArgs& args) {
  const auto config = load(common);
  const auto data = load_dataset(or_workdir(config, args.data, "data.mmld"));
  std::vector<AutoencoderTrainLog> logs;
  const auto set = train_autoencoders(config, data, &logs);
  const auto dir = or_workdir(config, args.out, "autoencoders");
  save_autoencoders(set, dir);
  auto csv = open_csv(args.log.empty() ? dir / "ae_loss.csv" : std::filesystem::path(args.log),
                      "modality,epoch,loss");
  for (std::size_t m = 0; m < logs.size(); ++m) {
    for (std::size_t e = 0; e < logs[m].epoch_loss.size(); ++e) {
      csv << set.pairs[m].spec.name << ',' << e << ',' << logs[m].epoch_loss[e] << '\n';
    }
    std::cout << set.pairs[m].spec.name << ": final reconstruction mse "
              << logs[m].epoch_loss.back() << '\n';
  }
}

// --- train-score ----------------------------------------------------------

struct TrainScoreArgs {
  std::string data;
  std::string ae;
  std::string out;
  std::string log;
  std::string mode = "multitime";
};

void train_score_cmd(const Common& common, const TrainScoreArgs& args) {
  const auto config = load(common);
  const auto mode = training_mode_from_name(args.mode);
  const auto data = load_dataset(or_workdir(config, args.data, "data.mmld"));
  const auto ae = load_autoencoders(config, or_workdir(config, args.ae, "autoencoders"));
  const auto out = or_workdir(config, args.out, "score.mmld");
  auto csv = open_csv(args.log.empty() ? std::filesystem::path(out).replace_extension(".csv")
                                       : std::filesystem::path(args.log),
                      "step,loss,omega,a2_size,t,grad_norm");
  const auto net = train_score(
      config, config.diffusion, ae, data, mode,
      [&](std::size_t step, const TrainingBatchOutcome& o) {
        csv << step << ',' << o.loss << ',' << o.omega << ','
            << o.partition.a2.size() << ',' << o.t << ',' << o.grad_norm << '\n';
      });
  ensure_parent(out);
  score_archive(net, config.diffusion).write(out);
  std::cout << "trained " << training_mode_name(mode) << " score network for "
            << config.score_training.steps << " steps -> " << out.string() << '\n';
}

// --- sample ---------------------------------------------------------------

struct SampleArgs {
  std::string ae;
  std::string score;
  std::vector<std::string> conditions;
  std::string method = "multitime";
  bool repaint = false;
  std::size_t count = 0;
  std::string out;
  std::string csv;
  std::string pgm;
};

// Conditioning data for one modality: "data.<name>" (e.g. a dataset file)
// or a container with a single "data" tensor.
Tensor read_condition(const std::filesystem::path& path, const std::string& name) {
  const auto ar = TensorArchive::read(path);
  const std::string key = "data." + name;
  Tensor t = ar.contains(key) ? ar.get(key) : ar.get("data");
  if (t.rank() == 1) t = t.reshaped({1, t.size()});
  return t;
}

void sample_cmd(const Common& common, const SampleArgs& args) {
  const auto config = load(common);
  const auto ae = load_autoencoders(config, or_workdir(config, args.ae, "autoencoders"));
  DiffusionConfig diffusion;
  const auto net = load_score_network(
      TensorArchive::read(or_workdir(config, args.score, "score.mmld")), &diffusion);
  if (!(net.layout() == ae.layout())) {
    throw ConfigError("score network layout does not match the autoencoders");
  }
  const auto layout = net.layout();
  const auto method = method_from_name(args.method);
  SamplerConfig sampler = config.sampler;
  if (args.repaint && !sampler.repaint) sampler.repaint = RepaintConfig{};
  sampler.validate(diffusion);

  std::map<std::size_t, Tensor> raw;
  for (const auto& item : args.conditions) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      throw ConfigError("--condition expects name=path, got '" + item + "'");
    }
    const auto name = item.substr(0, eq);
    const auto m = layout.index_of(name);
    if (raw.count(m)) throw ConfigError("modality '" + name + "' conditioned twice");
    raw.emplace(m, read_condition(item.substr(eq + 1), name));
  }
  std::size_t count = args.count;
  for (const auto& [m, x] : raw) {
    if (x.rows() == 1) continue;
    if (count != 0 && count != x.rows()) {
      throw ConfigError("--count disagrees with the rows of the conditioning data for '" +
                        layout.spec(m).name + "'");
    }
    count = x.rows();
  }
  if (count == 0) count = config.eval.samples;

  std::map<std::size_t, Tensor> latent_cond;
  for (const auto& [m, x] : raw) {
    Tensor z = encode(ae.pairs[m], ae.normalizers[m], x);
    if (z.rows() == 1) z = z.reshaped({z.cols()});
    latent_cond.emplace(m, std::move(z));
  }
  const Tensor joint = sample_latents(diffusion, sampler, net, method, latent_cond, count);
  auto decoded = decode_all(ae, joint);

  TensorArchive ar;
  add_layout(ar, layout);
  ar.add("latent", joint);
  for (std::size_t m = 0; m < layout.modality_count(); ++m) {
    ar.add("data." + layout.spec(m).name, decoded[m]);
  }
  const auto out = or_workdir(config, args.out, "samples.mmld");
  ensure_parent(out);
  ar.write(out);

  if (!args.csv.empty()) {
    std::string header = "sample";
    for (std::size_t m = 0; m < layout.modality_count(); ++m) {
      for (std::size_t j = 0; j < layout.spec(m).data_dim; ++j) {
        header += "," + layout.spec(m).name + "_" + std::to_string(j);
      }
    }
    auto csv = open_csv(args.csv, header);
    for (std::size_t i = 0; i < count; ++i) {
      csv << i;
      for (const auto& x : decoded) {
        for (double v : x.row(i)) csv << ',' << v;
      }
      csv << '\n';
    }
  }
  if (!args.pgm.empty()) {
    std::filesystem::create_directories(args.pgm);
    for (std::size_t m = 0; m < layout.modality_count(); ++m) {
      if (decoded[m].cols() != 2) continue;
      write_scatter_pgm(decoded[m],
                        std::filesystem::path(args.pgm) / (layout.spec(m).name + ".pgm"));
    }
  }
  std::cout << "sampled " << count << " joint latents ("
            << (raw.empty() ? "joint" : method_name(method)) << ", "
            << sampling_schedule(diffusion, sampler).size() << " sampler steps) -> "
            << out.string() << '\n';
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string test;
  std::string ae;
  std::string score;
  std::string out;
  std::string method = "multitime";
  bool no_robustness = false;
};

MultiModalDataset load_or_generate_test(const RunConfig& config, const std::string& path) {
  return path.empty() ? generate_test_split(config) : load_dataset(path);
}

void eval_cmd(const Common& common, const EvalArgs& args) {
  const auto config = load(common);
  const auto data = load_dataset(or_workdir(config, args.data, "data.mmld"));
  const auto test = load_or_generate_test(config, args.test);
  const auto ae = load_autoencoders(config, or_workdir(config, args.ae, "autoencoders"));
  DiffusionConfig diffusion;
  const auto net = load_score_network(
      TensorArchive::read(or_workdir(config, args.score, "score.mmld")), &diffusion);
  const auto classifiers = train_classifiers(config, data);
  EvalOptions options;
  options.method = method_from_name(args.method);
  options.robustness = !args.no_robustness;
  const auto rows = evaluate(config, diffusion, ae, net, classifiers, test, options);
  const auto out = or_workdir(config, args.out, "eval.csv");
  ensure_parent(out);
  write_eval_csv(rows, out);
  for (const auto& r : rows) {
    if (r.metric == "robustness_coherence") continue;
    std::cout << r.metric << ' ' << r.modality << " | " << r.condition_set << ": "
              << r.value << '\n';
  }
}

// --- ablate-d -------------------------------------------------------------

struct AblateArgs {
  std::string data;
  std::string test;
  std::string ae;
  std::string out;
  std::string method = "multitime";
  std::vector<double> d_list{0.0, 0.25, 0.5, 0.75, 1.0};
};

void ablate_d(const Common& common, const AblateArgs& args) {
  const auto config = load(common);
  const auto data = load_dataset(or_workdir(config, args.data, "data.mmld"));
  const auto test = load_or_generate_test(config, args.test);
  const auto ae = load_autoencoders(config, or_workdir(config, args.ae, "autoencoders"));
  const auto classifiers = train_classifiers(config, data);
  const auto method = method_from_name(args.method);
  const auto out = or_workdir(config, args.out, "ablate_d.csv");
  auto csv = open_csv(out, "d,metric,modality,condition_set,value,n_samples,seed");
  for (double d : args.d_list) {
    DiffusionConfig diffusion = config.diffusion;
    diffusion.d = d;
    diffusion.validate();
    // d = 1 is exactly unconditional training.
    const auto mode = d == 1.0 ? ScoreTrainingMode::kUnconditional
                               : ScoreTrainingMode::kMultiTime;
    const auto net = train_score(config, diffusion, ae, data, mode);
    EvalOptions options;
    options.method = mode == ScoreTrainingMode::kUnconditional ? SampleMethod::kInpaint
                                                                : method;
    options.robustness = false;
    for (const auto& r : evaluate(config, diffusion, ae, net, classifiers, test, options)) {
      csv << d << ',' << r.metric << ',' << r.modality << ',' << r.condition_set
          << ',' << r.value << ',' << r.n_samples << ',' << r.seed << '\n';
    }
    std::cout << "d=" << d << " done\n";
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Multi-modal latent diffusion toolchain", "mld"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "Run configuration (YAML)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Override the configured seed");
  };

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset");
  add_common(gen_cmd);
  gen_cmd->add_option("-o,--out", gen.out, "Output dataset file");
  gen_cmd->add_option("--split", gen.split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));

  TrainAeArgs ae;
  auto* ae_cmd = app.add_subcommand("train-ae", "Train the per-modality autoencoders");
  add_common(ae_cmd);
  ae_cmd->add_option("-d,--data", ae.data, "Training dataset");
  ae_cmd->add_option("-o,--out", ae.out, "Checkpoint directory");
  ae_cmd->add_option("--log", ae.log, "Loss CSV (default <out>/ae_loss.csv)");

  TrainScoreArgs ts;
  auto* ts_cmd = app.add_subcommand("train-score", "Train the latent score network");
  add_common(ts_cmd);
  ts_cmd->add_option("-d,--data", ts.data, "Training dataset");
  ts_cmd->add_option("--ae", ts.ae, "Autoencoder checkpoint directory");
  ts_cmd->add_option("-o,--out", ts.out, "Score network checkpoint");
  ts_cmd->add_option("--log", ts.log, "Training CSV (default: <out> with a .csv extension)");
  ts_cmd->add_option("--mode", ts.mode, "multitime, unidiffuser or unconditional")
      ->check(CLI::IsMember({"multitime", "unidiffuser", "unconditional"}));

  SampleArgs sa;
  auto* sa_cmd = app.add_subcommand("sample", "Generate joint or conditional samples");
  add_common(sa_cmd);
  sa_cmd->add_option("--ae", sa.ae, "Autoencoder checkpoint directory");
  sa_cmd->add_option("--score", sa.score, "Score network checkpoint");
  sa_cmd->add_option("--condition", sa.conditions, "modality=path, repeatable or comma separated")
      ->delimiter(',');
  sa_cmd->add_option("--method", sa.method, "multitime or inpaint")
      ->check(CLI::IsMember({"multitime", "inpaint"}));
  sa_cmd->add_flag("--repaint", sa.repaint, "Use the RePaint resampling schedule");
  sa_cmd->add_option("-n,--count", sa.count, "Number of samples");
  sa_cmd->add_option("-o,--out", sa.out, "Output container");
  sa_cmd->add_option("--csv", sa.csv, "Also write decoded samples as CSV");
  sa_cmd->add_option("--pgm", sa.pgm, "Directory for scatter plots of 2-D modalities");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Coherence, Frechet distance and robustness scan");
  add_common(ev_cmd);
  ev_cmd->add_option("-d,--data", ev.data, "Training dataset (classifier training)");
  ev_cmd->add_option("--test", ev.test, "Held-out dataset (default: generated)");
  ev_cmd->add_option("--ae", ev.ae, "Autoencoder checkpoint directory");
  ev_cmd->add_option("--score", ev.score, "Score network checkpoint");
  ev_cmd->add_option("-o,--out", ev.out, "Output CSV");
  ev_cmd->add_option("--method", ev.method, "multitime or inpaint")
      ->check(CLI::IsMember({"multitime", "inpaint"}));
  ev_cmd->add_flag("--no-robustness", ev.no_robustness, "Skip the robustness scan");

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate-d", "Retrain the score network for each d");
  add_common(ab_cmd);
  ab_cmd->add_option("-d,--data", ab.data, "Training dataset");
  ab_cmd->add_option("--test", ab.test, "Held-out dataset (default: generated)");
  ab_cmd->add_option("--ae", ab.ae, "Autoencoder checkpoint directory");
  ab_cmd->add_option("--d-list", ab.d_list, "Comma separated d values")->delimiter(',');
  ab_cmd->add_option("-o,--out", ab.out, "Output CSV");
  ab_cmd->add_option("--method", ab.method, "Conditional method for d < 1")
      ->check(CLI::IsMember({"multitime", "inpaint"}));

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen_cmd) gen_data(common, gen);
    if (*ae_cmd) train_ae(common, ae);
    if (*ts_cmd) train_score_cmd(common, ts);
    if (*sa_cmd) sample_cmd(common, sa);
    if (*ev_cmd) eval_cmd(common, ev);
    if (*ab_cmd) ablate_d(common, ab);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace mld::cli
