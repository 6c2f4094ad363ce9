#include "commands.hpp"

#include <filesystem>
#include <iostream>

#include "gradmask/config.hpp"
#include "gradmask/diagnostics.hpp"
#include "gradmask/metrics.hpp"
#include "gradmask/report_io.hpp"
#include "gradmask/training.hpp"
#include "gradmask/version.hpp"

namespace fs = std::filesystem;

namespace gradmask::cli {

namespace {

void emit_error(const std::string& kind, const std::string& message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

// Dataset inputs are generator-spec JSON files; the eval split and subset are
// carved out here so every subcommand sees the same data for the same flags.
LabeledDataset load_eval_dataset(const std::string& dataset_path, const std::string& split_name,
                                 std::size_t subset_n) {
  std::ifstream f(dataset_path);
  if (!f) throw ConfigError("cannot open dataset spec '" + dataset_path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("dataset spec parse error: " + std::string(e.what()));
  }
  const DatasetSpec spec = dataset_spec_from_json(j);
  const Split split = split_from_string(split_name);
  LabeledDataset ds = spec.generate(split);
  if (subset_n > 0 && subset_n < ds.size()) ds = subsample(ds, subset_n, spec.seed ^ 0xe5a1);
  return ds;
}

std::string model_id_from_path(const std::string& path) {
  return fs::path(path).stem().string();
}

}  // namespace

int cmd_train(const std::string& config_path, const GlobalOpts& g) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(config_path);
  } catch (const ConfigError& e) {
    emit_error("config", e.what());
    return kConfigError;
  }
  if (g.seed.has_value()) {
    cfg.seed = *g.seed;
    cfg.dataset.seed = *g.seed;
    cfg.model.seed = *g.seed;
    cfg.train.seed = *g.seed;
  }
  if (!g.out_dir.empty()) cfg.output_dir = g.out_dir;
  try {
    fs::create_directories(cfg.output_dir);
    const LabeledDataset train_ds = cfg.dataset.generate(Split::kTrain);
    TrainReport report = train(cfg.model, train_ds, cfg.train);
    const std::string digest = config_digest(to_json(cfg));

    const std::string model_path = (fs::path(cfg.output_dir) / "model.bin").string();
    save_model(report.model, model_path);
    nlohmann::json rj = train_report_to_json(report);
    rj["config_digest"] = digest;
    write_json((fs::path(cfg.output_dir) / "train_report.json").string(), rj);
    std::cout << "trained " << to_string(cfg.train.regime) << " model -> " << model_path
              << " (final clean accuracy "
              << (report.clean_accuracy.empty() ? 0.0 : report.clean_accuracy.back()) << ")\n";
    return kOk;
  } catch (const DivergenceError& e) {
    emit_error("divergence", e.what());
    return kRuntimeError;
  } catch (const std::exception& e) {
    emit_error("runtime", e.what());
    return kRuntimeError;
  }
}

int cmd_attack(const std::string& model_path, const std::string& dataset_path,
               const std::string& kind, double epsilon, int iterations, double relative_step,
               int restarts, std::uint64_t seed, const std::string& split, std::size_t subset_n,
               const GlobalOpts& g) {
  try {
    AttackSpec spec;
    spec.kind = attack_kind_from_string(kind);
    spec.epsilon = epsilon;
    if (iterations > 0) spec.iterations = iterations;
    if (relative_step > 0) spec.relative_step = relative_step;
    if (restarts > 0) spec.restarts = restarts;
    spec.seed = seed;
    spec.validate();

    const Model m = load_model(model_path);
    const LabeledDataset ds = load_eval_dataset(dataset_path, split, subset_n);
    const PerturbationResult r = run_attack(m, ds.x, ds.y, spec);

    fs::create_directories(g.out_dir);
    const std::string stem = model_id_from_path(model_path) + "_" + kind;
    save_perturbation(r, (fs::path(g.out_dir) / (stem + ".gmpr")).string());

    std::size_t fooled = 0;
    for (bool s : r.success) fooled += s ? 1 : 0;
    const double acc = 1.0 - static_cast<double>(fooled) / static_cast<double>(ds.size());
    nlohmann::json j{{"attack", kind},
                     {"epsilon", epsilon},
                     {"n", ds.size()},
                     {"accuracy", acc},
                     {"split", split},
                     {"model_id", model_id_from_path(model_path)},
                     {"tool_version", kVersion}};
    write_json((fs::path(g.out_dir) / (stem + ".json")).string(), j);
    std::cout << kind << " accuracy " << acc << " on " << ds.size() << " examples\n";
    return kOk;
  } catch (const ConfigError& e) {
    emit_error("config", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    emit_error("runtime", e.what());
    return kRuntimeError;
  }
}

int cmd_metrics(const std::string& model_path, const std::string& dataset_path,
                const std::vector<double>& epsilons, const std::string& split,
                std::size_t subset_n, const std::vector<std::string>& filter,
                const GlobalOpts& g) {
  try {
    for (const auto& name : filter) {
      const auto& valid = metric_names();
      if (std::find(valid.begin(), valid.end(), name) == valid.end()) {
        std::string names;
        for (const auto& v : valid) names += (names.empty() ? "" : ", ") + v;
        throw ConfigError("unknown metric '" + name + "'; valid names: " + names);
      }
    }
    const Model m = load_model(model_path);
    const LabeledDataset ds = load_eval_dataset(dataset_path, split, subset_n);
    const std::string model_id = model_id_from_path(model_path);
    nlohmann::json cfgj{{"model", model_path},     {"dataset", dataset_path},
                        {"epsilons", epsilons},    {"split", split},
                        {"subset_n", subset_n}};
    const std::string digest = config_digest(cfgj);

    MetricSuiteResult suite = run_metric_suite(m, ds, epsilons, model_id, digest);
    fs::create_directories(g.out_dir);
    std::size_t written = 0;
    for (const auto& r : suite.reports) {
      if (!filter.empty() &&
          std::find(filter.begin(), filter.end(), r.metric) == filter.end())
        continue;
      const std::string name =
          model_id + "_" + r.metric + "_" + eps_tag(r.epsilon) + "_" + to_string(r.split) + ".json";
      write_json((fs::path(g.out_dir) / name).string(), to_json(r));
      ++written;
    }
    if (!suite.failures.empty()) {
      nlohmann::json fj{{"failures", suite.failures}};
      write_json((fs::path(g.out_dir) / (model_id + "_metric_failures.json")).string(), fj);
      emit_error("partial", std::to_string(suite.failures.size()) + " metric(s) failed");
      return kPartialFailure;
    }
    std::cout << "wrote " << written << " metric report(s) to " << g.out_dir << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    emit_error("config", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    emit_error("runtime", e.what());
    return kRuntimeError;
  }
}

int cmd_checklist(const std::string& model_path, const std::string& dataset_path,
                  const std::vector<double>& epsilons, const std::string& split,
                  std::size_t subset_n, const GlobalOpts& g) {
  try {
    const Model m = load_model(model_path);
    const LabeledDataset ds = load_eval_dataset(dataset_path, split, subset_n);
    ChecklistOptions opts;
    opts.seed = g.seed.value_or(0);
    const ChecklistReport r = run_checklist(m, ds, epsilons, opts);
    fs::create_directories(g.out_dir);
    nlohmann::json j = to_json(r);
    j["model_id"] = model_id_from_path(model_path);
    j["split"] = split;
    write_json((fs::path(g.out_dir) / (model_id_from_path(model_path) + "_checklist.json")).string(), j);
    std::cout << "checklist: overall_suspect=" << (r.overall_suspect ? "true" : "false") << "\n";
    return r.errors.empty() ? kOk : kPartialFailure;
  } catch (const ConfigError& e) {
    emit_error("config", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    emit_error("runtime", e.what());
    return kRuntimeError;
  }
}

int cmd_cross_section(const std::string& model_path, const std::string& dataset_path,
                      double t_max, std::size_t k, const std::string& split, std::size_t subset_n,
                      const GlobalOpts& g) {
  try {
    if (t_max <= 0.0) throw ConfigError("t_max must be > 0");
    if (k < 2) throw ConfigError("k must be >= 2");
    const Model m = load_model(model_path);
    const LabeledDataset ds = load_eval_dataset(dataset_path, split, subset_n);
    const CrossSection cs = loss_cross_section(m, ds, t_max, k);
    fs::create_directories(g.out_dir);
    const std::string stem = model_id_from_path(model_path) + "_cross_section";
    atomic_write((fs::path(g.out_dir) / (stem + ".csv")).string(), cross_section_csv(cs));
    write_json((fs::path(g.out_dir) / (stem + ".json")).string(), to_json(cs));
    std::cout << "wrote " << stem << ".csv/.json (" << k << " grid points)\n";
    return kOk;
  } catch (const ConfigError& e) {
    emit_error("config", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    emit_error("runtime", e.what());
    return kRuntimeError;
  }
}

int cmd_zoo_write_default(const std::string& path, std::uint64_t seed) {
  try {
    write_json(path, to_json(default_zoo_manifest(seed)));
    std::cout << "wrote default zoo manifest to " << path << "\n";
    return kOk;
  } catch (const std::exception& e) {
    emit_error("runtime", e.what());
    return kRuntimeError;
  }
}

}  // namespace gradmask::cli
