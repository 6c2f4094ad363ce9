#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradmask/attacks.hpp"
#include "gradmask/dataset.hpp"
#include "gradmask/model.hpp"

namespace gradmask {

class DivergenceError : public Error {
 public:
  using Error::Error;
};

enum class Regime { kStandard, kAdversarial, kJacobian, kGradClip };
std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct TrainConfig {
  Regime regime = Regime::kStandard;
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  AttackSpec attack;                       // adversarial regime: inner attack
  double lambda = 0.0;                     // jacobian regime
  std::optional<double> clip_threshold;    // grad_clip regime; empty = auto
                                           // (0.5 * median unclipped norm of epoch 1)
  bool co_monitor = false;
  int monitor_n = 128;
  double monitor_epsilon = 8.0 / 255.0;

  void validate() const;
};

struct TrainReport {
  std::vector<double> clean_accuracy;   // per epoch, on the train split
  std::vector<double> fgsm_accuracy;    // per epoch, when co_monitor
  std::vector<double> pgd_accuracy;
  Model model;
  bool co_detected = false;
  double clip_threshold_used = 0.0;     // grad_clip regime only
  double final_loss = 0.0;
};

/// Train a fresh model from `spec` on `dataset` under the configured regime.
/// Pure function of (spec, dataset, config): repeat runs are bit-identical.
TrainReport train(const ModelSpec& spec, const LabeledDataset& dataset, const TrainConfig& cfg);

/// Accuracy of predict(x~) == y where x~ is the (optionally attacked) input.
double evaluate_accuracy(const Model& m, const LabeledDataset& ds,
                         const std::optional<AttackSpec>& attack = std::nullopt);

/// True iff some epoch shows the catastrophic-overfitting signature:
/// FGSM accuracy >= fgsm_floor while PGD accuracy <= pgd_ceiling.
bool detect_catastrophic_overfitting(const TrainReport& report, double fgsm_floor = 0.7,
                                     double pgd_ceiling = 0.1);

}  // namespace gradmask
