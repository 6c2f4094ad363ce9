#include "gradmask/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace gradmask {

namespace {

// Wraps json access so errors name the offending field.
template <class T>
T field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name)) throw ConfigError(std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for field '") + name + "': " + e.what());
  }
}

template <class T>
T field_or(const nlohmann::json& j, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for field '") + name + "': " + e.what());
  }
}

}  // namespace

LabeledDataset DatasetSpec::generate(Split split) const {
  if (kind == "blobs") return gen_blobs(d, classes, n_per_class, spread, seed, split);
  if (kind == "rings") return gen_rings(d, n_per_class, noise, seed, split);
  throw ConfigError("unknown dataset kind '" + kind + "' (expected blobs or rings)");
}

void ZooManifest::validate() const {
  if (models.empty()) throw ConfigError("zoo manifest: no models listed");
  std::set<std::string> names;
  for (const auto& m : models) {
    if (m.name.empty()) throw ConfigError("zoo manifest: model with empty name");
    if (!names.insert(m.name).second)
      throw ConfigError("zoo manifest: duplicate model name '" + m.name + "'");
  }
  if (metric_epsilons.empty()) throw ConfigError("zoo manifest: metric_epsilons is empty");
}

nlohmann::json to_json(const DatasetSpec& s) {
  return {{"kind", s.kind},   {"d", s.d},         {"classes", s.classes},
          {"n_per_class", s.n_per_class}, {"spread", s.spread}, {"noise", s.noise},
          {"seed", s.seed}};
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.kind = field<std::string>(j, "kind");
  s.d = field<std::size_t>(j, "d");
  s.classes = field_or<std::size_t>(j, "classes", 2);
  s.n_per_class = field<std::size_t>(j, "n_per_class");
  s.spread = field_or<double>(j, "spread", 0.04);
  s.noise = field_or<double>(j, "noise", 0.02);
  s.seed = field<std::uint64_t>(j, "seed");
  if (s.kind != "blobs" && s.kind != "rings")
    throw ConfigError("dataset.kind must be blobs or rings, got '" + s.kind + "'");
  return s;
}

nlohmann::json to_json(const ModelSpec& s) {
  return {{"arch", to_string(s.arch)},
          {"widths", s.widths},
          {"activation", to_string(s.activation)},
          {"input_dim", s.input_dim},
          {"num_classes", s.num_classes},
          {"seed", s.seed}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  try {
    s.arch = arch_from_string(field<std::string>(j, "arch"));
    s.activation = activation_from_string(field<std::string>(j, "activation"));
  } catch (const ValueError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  s.widths = field<std::vector<std::size_t>>(j, "widths");
  s.input_dim = field<std::size_t>(j, "input_dim");
  s.num_classes = field<std::size_t>(j, "num_classes");
  s.seed = field<std::uint64_t>(j, "seed");
  try {
    s.validate();
  } catch (const ValueError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return s;
}

nlohmann::json to_json(const AttackSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"epsilon", s.epsilon},
          {"iterations", s.iterations},
          {"relative_step", s.relative_step},
          {"restarts", s.restarts},
          {"random_start", s.random_start},
          {"spsa_samples", s.spsa_samples},
          {"spsa_sigma", s.spsa_sigma},
          {"unbounded_step", s.unbounded_step},
          {"deepfool_max_iter", s.deepfool_max_iter},
          {"deepfool_overshoot", s.deepfool_overshoot},
          {"seed", s.seed},
          {"capture_trajectory", s.capture_trajectory}};
}

AttackSpec attack_spec_from_json(const nlohmann::json& j) {
  AttackSpec s;
  try {
    s.kind = attack_kind_from_string(field<std::string>(j, "kind"));
  } catch (const ValueError& e) {
    throw ConfigError(std::string("attack: ") + e.what());
  }
  s.epsilon = field_or<double>(j, "epsilon", s.epsilon);
  s.iterations = field_or<int>(j, "iterations", s.iterations);
  s.relative_step = field_or<double>(j, "relative_step", s.relative_step);
  s.restarts = field_or<int>(j, "restarts", s.restarts);
  s.random_start = field_or<bool>(j, "random_start", s.random_start);
  s.spsa_samples = field_or<int>(j, "spsa_samples", s.spsa_samples);
  s.spsa_sigma = field_or<double>(j, "spsa_sigma", s.spsa_sigma);
  s.unbounded_step = field_or<double>(j, "unbounded_step", s.unbounded_step);
  s.deepfool_max_iter = field_or<int>(j, "deepfool_max_iter", s.deepfool_max_iter);
  s.deepfool_overshoot = field_or<double>(j, "deepfool_overshoot", s.deepfool_overshoot);
  s.seed = field_or<std::uint64_t>(j, "seed", 0);
  s.capture_trajectory = field_or<bool>(j, "capture_trajectory", false);
  try {
    s.validate();
  } catch (const ValueError& e) {
    throw ConfigError(std::string("attack: ") + e.what());
  }
  return s;
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"regime", to_string(c.regime)},
                   {"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"learning_rate", c.learning_rate},
                   {"momentum", c.momentum},
                   {"seed", c.seed},
                   {"lambda", c.lambda},
                   {"co_monitor", c.co_monitor},
                   {"monitor_n", c.monitor_n},
                   {"monitor_epsilon", c.monitor_epsilon}};
  if (c.regime == Regime::kAdversarial) j["attack"] = to_json(c.attack);
  if (c.clip_threshold.has_value()) j["clip_threshold"] = *c.clip_threshold;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.regime = regime_from_string(field<std::string>(j, "regime"));
  } catch (const ValueError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  c.epochs = field_or<int>(j, "epochs", c.epochs);
  c.batch_size = field_or<int>(j, "batch_size", c.batch_size);
  c.learning_rate = field_or<double>(j, "learning_rate", c.learning_rate);
  c.momentum = field_or<double>(j, "momentum", c.momentum);
  c.seed = field_or<std::uint64_t>(j, "seed", 0);
  c.lambda = field_or<double>(j, "lambda", 0.0);
  c.co_monitor = field_or<bool>(j, "co_monitor", false);
  c.monitor_n = field_or<int>(j, "monitor_n", c.monitor_n);
  c.monitor_epsilon = field_or<double>(j, "monitor_epsilon", c.monitor_epsilon);
  if (j.contains("clip_threshold")) c.clip_threshold = field<double>(j, "clip_threshold");
  if (c.regime == Regime::kAdversarial) {
    if (!j.contains("attack"))
      throw ConfigError("train: adversarial regime requires an 'attack' block");
    c.attack = attack_spec_from_json(j.at("attack"));
  }
  try {
    c.validate();
  } catch (const ValueError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const EvalSubsetSpec& s) {
  return {{"test_n", s.test_n}, {"train_n", s.train_n}, {"seed", s.seed}};
}

EvalSubsetSpec eval_subset_from_json(const nlohmann::json& j) {
  EvalSubsetSpec s;
  s.test_n = field_or<std::size_t>(j, "test_n", s.test_n);
  s.train_n = field_or<std::size_t>(j, "train_n", s.train_n);
  s.seed = field_or<std::uint64_t>(j, "seed", 0);
  return s;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["dataset"] = to_json(c.dataset);
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  auto arr = nlohmann::json::array();
  for (const auto& a : c.attacks) arr.push_back(to_json(a));
  j["attacks"] = arr;
  j["metric_epsilons"] = c.metric_epsilons;
  j["eval_subset"] = to_json(c.eval_subset);
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.seed = field_or<std::uint64_t>(j, "seed", 1);
  c.output_dir = field_or<std::string>(j, "output_dir", "out");
  if (!j.contains("dataset")) throw ConfigError("missing field 'dataset'");
  c.dataset = dataset_spec_from_json(j.at("dataset"));
  if (!j.contains("model")) throw ConfigError("missing field 'model'");
  c.model = model_spec_from_json(j.at("model"));
  if (!j.contains("train")) throw ConfigError("missing field 'train'");
  c.train = train_config_from_json(j.at("train"));
  c.attacks.clear();
  if (j.contains("attacks"))
    for (const auto& a : j.at("attacks")) c.attacks.push_back(attack_spec_from_json(a));
  c.metric_epsilons =
      field_or<std::vector<double>>(j, "metric_epsilons", {8.0 / 255.0, 16.0 / 255.0});
  if (j.contains("eval_subset")) c.eval_subset = eval_subset_from_json(j.at("eval_subset"));
  return c;
}

nlohmann::json to_json(const ZooManifest& z) {
  nlohmann::json j;
  j["seed"] = z.seed;
  j["dataset"] = to_json(z.dataset);
  j["eval_subset"] = to_json(z.eval_subset);
  j["metric_epsilons"] = z.metric_epsilons;
  auto arr = nlohmann::json::array();
  for (const auto& m : z.models) {
    arr.push_back({{"name", m.name}, {"model", to_json(m.model)}, {"train", to_json(m.train)}});
  }
  j["models"] = arr;
  return j;
}

ZooManifest zoo_manifest_from_json(const nlohmann::json& j) {
  ZooManifest z;
  z.seed = field_or<std::uint64_t>(j, "seed", 1);
  if (!j.contains("dataset")) throw ConfigError("missing field 'dataset'");
  z.dataset = dataset_spec_from_json(j.at("dataset"));
  if (j.contains("eval_subset")) z.eval_subset = eval_subset_from_json(j.at("eval_subset"));
  z.metric_epsilons =
      field_or<std::vector<double>>(j, "metric_epsilons", {8.0 / 255.0, 16.0 / 255.0});
  if (!j.contains("models")) throw ConfigError("missing field 'models'");
  for (const auto& mj : j.at("models")) {
    ZooModelEntry e;
    e.name = field<std::string>(mj, "name");
    if (!mj.contains("model")) throw ConfigError("zoo model '" + e.name + "': missing 'model'");
    e.model = model_spec_from_json(mj.at("model"));
    if (!mj.contains("train")) throw ConfigError("zoo model '" + e.name + "': missing 'train'");
    e.train = train_config_from_json(mj.at("train"));
    z.models.push_back(std::move(e));
  }
  z.validate();
  return z;
}

namespace {

nlohmann::json parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in '" + path + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(parse_file(path));
}

ZooManifest load_zoo_manifest(const std::string& path) {
  return zoo_manifest_from_json(parse_file(path));
}

ZooManifest default_zoo_manifest(std::uint64_t seed) {
  const double eps_small = 8.0 / 255.0;
  const double eps_large = 16.0 / 255.0;
  ZooManifest z;
  z.seed = seed;
  z.dataset.kind = "blobs";
  z.dataset.d = 16;
  z.dataset.classes = 3;
  z.dataset.n_per_class = 200;
  z.dataset.spread = 0.04;
  z.dataset.seed = seed;
  z.eval_subset.test_n = 200;
  z.eval_subset.train_n = 200;
  z.eval_subset.seed = seed;
  z.metric_epsilons = {eps_small, eps_large};

  ModelSpec base;
  base.arch = Arch::kMlp;
  base.widths = {64, 64};
  base.activation = Activation::kRelu;
  base.input_dim = 16;
  base.num_classes = 3;
  base.seed = seed;

  TrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 64;
  tc.learning_rate = 0.05;
  tc.momentum = 0.9;
  tc.seed = seed;

  auto adv = [&](AttackKind kind, double eps, int iters, double rel) {
    TrainConfig c = tc;
    c.regime = Regime::kAdversarial;
    c.attack.kind = kind;
    c.attack.epsilon = eps;
    c.attack.iterations = iters;
    c.attack.relative_step = rel;
    c.attack.seed = seed;
    return c;
  };

  z.models.push_back({"standard", base, tc});
  z.models.push_back({"fgsm_at_8", base, adv(AttackKind::kFgsm, eps_small, 1, 1.0)});
  z.models.push_back({"fgsm_at_16", base, adv(AttackKind::kFgsm, eps_large, 1, 1.0)});
  z.models.push_back({"stepll_at_16", base, adv(AttackKind::kStepLl, eps_large, 1, 1.0)});
  // 7 PGD iterations, relative step 1/4
  z.models.push_back({"pgd_at_8", base, adv(AttackKind::kPgd, eps_small, 7, 0.25)});
  {
    TrainConfig c = tc;
    c.regime = Regime::kJacobian;
    c.lambda = 0.1;
    z.models.push_back({"jacobian_0.1", base, c});
  }
  {
    TrainConfig c = tc;
    c.regime = Regime::kGradClip;  // auto threshold: half the epoch-1 median norm
    z.models.push_back({"grad_clip", base, c});
  }
  return z;
}

std::string config_digest(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace gradmask
