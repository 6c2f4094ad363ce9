#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradmask/attacks.hpp"
#include "gradmask/dataset.hpp"
#include "gradmask/model.hpp"
#include "gradmask/training.hpp"
#include "json.hpp"

namespace gradmask {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DatasetSpec {
  std::string kind = "blobs";  // blobs | rings
  std::size_t d = 16;
  std::size_t classes = 3;
  std::size_t n_per_class = 200;
  double spread = 0.04;   // blobs
  double noise = 0.02;    // rings
  std::uint64_t seed = 0;

  LabeledDataset generate(Split split) const;
};

struct EvalSubsetSpec {
  std::size_t test_n = 200;
  std::size_t train_n = 200;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;
  std::vector<AttackSpec> attacks;
  std::vector<double> metric_epsilons = {8.0 / 255.0, 16.0 / 255.0};
  EvalSubsetSpec eval_subset;
};

struct ZooModelEntry {
  std::string name;
  ModelSpec model;
  TrainConfig train;
};

struct ZooManifest {
  std::uint64_t seed = 1;
  DatasetSpec dataset;
  EvalSubsetSpec eval_subset;
  std::vector<double> metric_epsilons = {8.0 / 255.0, 16.0 / 255.0};
  std::vector<ZooModelEntry> models;

  void validate() const;  // unique names, nonempty
};

// JSON (de)serialization. Parsing reports the offending field on error and
// round-trips losslessly (binary64 values emitted shortest-roundtrip).
nlohmann::json to_json(const DatasetSpec&);
nlohmann::json to_json(const ModelSpec&);
nlohmann::json to_json(const TrainConfig&);
nlohmann::json to_json(const AttackSpec&);
nlohmann::json to_json(const EvalSubsetSpec&);
nlohmann::json to_json(const ExperimentConfig&);
nlohmann::json to_json(const ZooManifest&);

DatasetSpec dataset_spec_from_json(const nlohmann::json&);
ModelSpec model_spec_from_json(const nlohmann::json&);
TrainConfig train_config_from_json(const nlohmann::json&);
AttackSpec attack_spec_from_json(const nlohmann::json&);
EvalSubsetSpec eval_subset_from_json(const nlohmann::json&);
ExperimentConfig experiment_config_from_json(const nlohmann::json&);
ZooManifest zoo_manifest_from_json(const nlohmann::json&);

ExperimentConfig load_experiment_config(const std::string& path);
ZooManifest load_zoo_manifest(const std::string& path);

/// The paper-style 7-model default zoo: standard, FGSM-AT at both epsilons,
/// Step-ll-AT at the large epsilon, PGD-AT, Jacobian regularization, and
/// gradient clipping.
ZooManifest default_zoo_manifest(std::uint64_t seed);

/// FNV-1a digest of the canonical JSON dump, hex-encoded.
std::string config_digest(const nlohmann::json& j);

}  // namespace gradmask
