#include "mld/cli/run_config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "mld/error.hpp"
#include "mld/rng.hpp"

namespace mld::cli {

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config key '" + path + "': " + what);
}

// Rejects keys outside `allowed` so typos do not silently fall back to
// defaults.
void check_keys(const YAML::Node& node, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!node.IsMap()) fail(path, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(join(path, key), "unknown key");
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& path, const char* kind) {
  if (!node.IsScalar()) fail(path, std::string("expected ") + kind);
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(path, std::string("expected ") + kind + ", got '" +
                   node.Scalar() + "'");
  }
}

void read_double(const YAML::Node& parent, const std::string& path,
                 const std::string& key, double& out) {
  if (const auto n = parent[key]) out = scalar<double>(n, join(path, key), "a number");
}

void read_size(const YAML::Node& parent, const std::string& path,
               const std::string& key, std::size_t& out) {
  const auto n = parent[key];
  if (!n) return;
  const auto v = scalar<long long>(n, join(path, key), "an integer");
  if (v < 0) fail(join(path, key), "must be non-negative");
  out = static_cast<std::size_t>(v);
}

void read_u64(const YAML::Node& parent, const std::string& path,
              const std::string& key, std::uint64_t& out) {
  if (const auto n = parent[key]) {
    out = scalar<std::uint64_t>(n, join(path, key), "an unsigned integer");
  }
}

void read_string(const YAML::Node& parent, const std::string& path,
                 const std::string& key, std::string& out) {
  if (const auto n = parent[key]) out = scalar<std::string>(n, join(path, key), "a string");
}

void read_sizes(const YAML::Node& parent, const std::string& path,
                const std::string& key, std::vector<std::size_t>& out) {
  const auto n = parent[key];
  if (!n) return;
  const auto p = join(path, key);
  if (!n.IsSequence()) fail(p, "expected a list of integers");
  out.clear();
  for (std::size_t i = 0; i < n.size(); ++i) {
    const auto v = scalar<long long>(n[i], p + "[" + std::to_string(i) + "]",
                                     "an integer");
    if (v <= 0) fail(p + "[" + std::to_string(i) + "]", "must be >= 1");
    out.push_back(static_cast<std::size_t>(v));
  }
}

void read_doubles(const YAML::Node& parent, const std::string& path,
                  const std::string& key, std::vector<double>& out) {
  const auto n = parent[key];
  if (!n) return;
  const auto p = join(path, key);
  if (!n.IsSequence()) fail(p, "expected a list of numbers");
  out.clear();
  for (std::size_t i = 0; i < n.size(); ++i) {
    out.push_back(scalar<double>(n[i], p + "[" + std::to_string(i) + "]", "a number"));
  }
}

void read_activation(const YAML::Node& parent, const std::string& path,
                     Activation& out) {
  std::string name;
  read_string(parent, path, "activation", name);
  if (name.empty()) return;
  try {
    out = activation_from_name(name);
  } catch (const Error& e) {
    fail(join(path, "activation"), e.what());
  }
}

void parse_modality(const YAML::Node& node, const std::string& path,
                    ModalityDataConfig& data, std::size_t& latent_dim) {
  check_keys(node, path,
             {"name", "data_dim", "latent_dim", "preset", "noise_scale",
              "radius", "nuisance_dims", "nuisance_scale"});
  read_string(node, path, "name", data.name);
  if (data.name.empty()) fail(join(path, "name"), "is required");
  read_size(node, path, "data_dim", data.data_dim);
  std::string preset = "easy";
  read_string(node, path, "preset", preset);
  if (preset == "hard") {
    data = ModalityDataConfig::hard(data.name, data.data_dim);
  } else if (preset != "easy") {
    fail(join(path, "preset"), "expected 'easy' or 'hard'");
  }
  read_double(node, path, "noise_scale", data.noise_scale);
  read_double(node, path, "radius", data.radius);
  read_size(node, path, "nuisance_dims", data.nuisance_dims);
  read_double(node, path, "nuisance_scale", data.nuisance_scale);
  if (!node["latent_dim"]) fail(join(path, "latent_dim"), "is required");
  read_size(node, path, "latent_dim", latent_dim);
  if (latent_dim == 0) fail(join(path, "latent_dim"), "must be >= 1");
  if (data.data_dim < 2) fail(join(path, "data_dim"), "must be >= 2");
  if (data.nuisance_dims + 2 > data.data_dim) {
    fail(join(path, "nuisance_dims"), "must leave at least 2 signal dims");
  }
  if (data.noise_scale < 0.0) fail(join(path, "noise_scale"), "must be >= 0");
  if (data.nuisance_scale < 0.0) fail(join(path, "nuisance_scale"), "must be >= 0");
  if (!(data.radius > 0.0)) fail(join(path, "radius"), "must be > 0");
}

void parse_data(const YAML::Node& node, RunConfig& c) {
  const std::string path = "data";
  check_keys(node, path, {"classes", "samples_per_class", "modalities"});
  read_size(node, path, "classes", c.data.classes);
  read_size(node, path, "samples_per_class", c.data.samples_per_class);
  const auto mods = node["modalities"];
  if (!mods) fail("data.modalities", "is required");
  if (!mods.IsSequence() || mods.size() == 0) {
    fail("data.modalities", "expected a non-empty list");
  }
  c.data.modalities.clear();
  c.latent_dims.clear();
  std::set<std::string> names;
  for (std::size_t i = 0; i < mods.size(); ++i) {
    const auto p = "data.modalities[" + std::to_string(i) + "]";
    ModalityDataConfig m;
    std::size_t latent = 0;
    parse_modality(mods[i], p, m, latent);
    if (!names.insert(m.name).second) fail(p + ".name", "duplicate modality name");
    c.data.modalities.push_back(m);
    c.latent_dims.push_back(latent);
  }
}

void parse_autoencoder(const YAML::Node& node, RunConfig& c) {
  const std::string path = "autoencoder";
  check_keys(node, path, {"hidden", "activation", "epochs", "batch_size", "lr"});
  auto& a = c.autoencoder;
  read_sizes(node, path, "hidden", a.hidden);
  read_activation(node, path, a.activation);
  read_size(node, path, "epochs", a.epochs);
  read_size(node, path, "batch_size", a.batch_size);
  read_double(node, path, "lr", a.lr);
}

void parse_classifier(const YAML::Node& node, RunConfig& c) {
  const std::string path = "classifier";
  check_keys(node, path, {"hidden", "epochs", "batch_size", "lr"});
  auto& k = c.classifier;
  read_sizes(node, path, "hidden", k.hidden);
  read_size(node, path, "epochs", k.epochs);
  read_size(node, path, "batch_size", k.batch_size);
  read_double(node, path, "lr", k.lr);
}

void parse_diffusion(const YAML::Node& node, RunConfig& c) {
  const std::string path = "diffusion";
  check_keys(node, path, {"beta_min", "beta_max", "horizon", "n_steps", "d", "t_eps"});
  auto& d = c.diffusion;
  read_double(node, path, "beta_min", d.beta_min);
  read_double(node, path, "beta_max", d.beta_max);
  read_double(node, path, "horizon", d.horizon);
  read_size(node, path, "n_steps", d.n_steps);
  read_double(node, path, "d", d.d);
  read_double(node, path, "t_eps", d.t_eps);
}

void parse_score(const YAML::Node& node, RunConfig& c) {
  const std::string path = "score";
  check_keys(node, path,
             {"width", "blocks", "time_embed", "max_frequency", "activation",
              "lr", "ema_momentum", "steps", "batch_size"});
  auto& s = c.score;
  read_size(node, path, "width", s.width);
  read_size(node, path, "blocks", s.blocks);
  read_size(node, path, "time_embed", s.time_embed);
  read_double(node, path, "max_frequency", s.max_frequency);
  read_activation(node, path, s.activation);
  read_double(node, path, "lr", s.adam.lr);
  read_double(node, path, "ema_momentum", s.ema_momentum);
  read_size(node, path, "steps", c.score_training.steps);
  read_size(node, path, "batch_size", c.score_training.batch_size);
}

void parse_sampler(const YAML::Node& node, RunConfig& c) {
  const std::string path = "sampler";
  check_keys(node, path, {"n_steps", "repaint"});
  read_size(node, path, "n_steps", c.sampler.n_steps);
  if (const auto r = node["repaint"]) {
    if (r.IsNull()) {
      c.sampler.repaint.reset();
      return;
    }
    check_keys(r, "sampler.repaint", {"resample_times", "jump"});
    RepaintConfig rp;
    read_size(r, "sampler.repaint", "resample_times", rp.resample_times);
    read_size(r, "sampler.repaint", "jump", rp.jump);
    c.sampler.repaint = rp;
  }
}

void parse_eval(const YAML::Node& node, RunConfig& c) {
  const std::string path = "eval";
  check_keys(node, path, {"samples", "test_stream", "robustness_grid"});
  read_size(node, path, "samples", c.eval.samples);
  read_u64(node, path, "test_stream", c.eval.test_stream);
  read_doubles(node, path, "robustness_grid", c.eval.robustness_grid);
}

// Runs a nested validate() and re-labels its error with the section key.
template <typename F>
void validate_section(const std::string& section, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError("config section '" + section + "': " + e.what());
  }
}

}  // namespace

std::vector<ModalitySpec> RunConfig::modality_specs() const {
  std::vector<ModalitySpec> specs;
  for (std::size_t i = 0; i < data.modalities.size(); ++i) {
    specs.push_back({data.modalities[i].name, data.modalities[i].data_dim,
                     latent_dims.at(i)});
  }
  return specs;
}

ModalityLayout RunConfig::layout() const { return ModalityLayout(modality_specs()); }

void RunConfig::validate() const {
  if (latent_dims.size() != data.modalities.size()) {
    fail("data.modalities", "every modality needs a latent_dim");
  }
  validate_section("data", [&] { data.validate(); });
  validate_section("autoencoder", [&] { autoencoder.validate(); });
  if (classifier.epochs == 0) fail("classifier.epochs", "must be >= 1");
  if (classifier.batch_size == 0) fail("classifier.batch_size", "must be >= 1");
  if (!(classifier.lr > 0.0)) fail("classifier.lr", "must be > 0");
  validate_section("diffusion", [&] { diffusion.validate(); });
  validate_section("score", [&] { score.validate(); });
  if (score_training.steps == 0) fail("score.steps", "must be >= 1");
  if (score_training.batch_size == 0) fail("score.batch_size", "must be >= 1");
  validate_section("sampler", [&] { sampler.validate(diffusion); });
  if (eval.samples == 0) fail("eval.samples", "must be >= 1");
  if (eval.test_stream == 0) {
    fail("eval.test_stream", "must differ from the training stream 0");
  }
  for (std::size_t i = 0; i < eval.robustness_grid.size(); ++i) {
    const double t = eval.robustness_grid[i];
    if (!(t >= 0.0 && t <= diffusion.horizon)) {
      fail("eval.robustness_grid[" + std::to_string(i) + "]", "must lie in [0, T]");
    }
  }
}

void derive_seeds(RunConfig& c) {
  c.data.seed = mix_seed(c.seed, 1);
  c.autoencoder.seed = mix_seed(c.seed, 2);
  c.classifier.seed = mix_seed(c.seed, 3);
  c.score.seed = mix_seed(c.seed, 4);
  c.sampler.seed = mix_seed(c.seed, 5);
}

std::uint64_t eval_seed(const RunConfig& c) { return mix_seed(c.seed, 6); }

RunConfig parse_run_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  RunConfig c;
  check_keys(root, "",
             {"seed", "workdir", "data", "autoencoder", "classifier",
              "diffusion", "score", "sampler", "eval"});
  read_u64(root, "", "seed", c.seed);
  if (const auto w = root["workdir"]) c.workdir = scalar<std::string>(w, "workdir", "a path");
  if (!root["data"]) fail("data", "is required");
  parse_data(root["data"], c);
  if (const auto n = root["autoencoder"]) parse_autoencoder(n, c);
  if (const auto n = root["classifier"]) parse_classifier(n, c);
  if (const auto n = root["diffusion"]) parse_diffusion(n, c);
  if (const auto n = root["score"]) parse_score(n, c);
  if (const auto n = root["sampler"]) parse_sampler(n, c);
  if (const auto n = root["eval"]) parse_eval(n, c);
  c.validate();
  derive_seeds(c);
  return c;
}

void apply_env_overrides(RunConfig& c) {
  if (const char* s = std::getenv("MLD_SEED"); s && *s) {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(s, &used);
      if (s[used] != '\0') throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("MLD_SEED is not an unsigned integer: '") + s + "'");
    }
  }
  if (const char* w = std::getenv("MLD_WORKDIR"); w && *w) c.workdir = w;
  derive_seeds(c);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto c = parse_run_config(ss.str());
  apply_env_overrides(c);
  return c;
}

}  // namespace mld::cli
