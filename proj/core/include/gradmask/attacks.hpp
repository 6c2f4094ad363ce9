#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradmask/model.hpp"
#include "gradmask/tensor.hpp"

namespace gradmask {

enum class AttackKind {
  kFgsm,
  kStepLl,
  kPgd,
  kPgdUnbounded,
  kRandomSign,
  kSpsa,
  kDeepFool,
};
std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackSpec {
  AttackKind kind = AttackKind::kPgd;
  double epsilon = 8.0 / 255.0;   // L-inf budget; ignored by deepfool/unbounded
  int iterations = 25;
  double relative_step = 0.1;     // PGD step = relative_step * epsilon
  int restarts = 1;
  bool random_start = true;       // PGD only
  int spsa_samples = 256;         // loss evaluations per iteration (antithetic pairs)
  double spsa_sigma = 0.01;
  double unbounded_step = 0.05;   // pgd_unbounded only
  int deepfool_max_iter = 50;
  double deepfool_overshoot = 0.02;
  std::uint64_t seed = 0;
  bool capture_trajectory = false;

  void validate() const;
};

/// Outcome of one attack on a batch. delta is the effective perturbation
/// x_adv - x, so x_adv = clamp(x + delta, 0, 1) holds exactly and bounded
/// kinds satisfy |delta|_inf <= epsilon.
struct PerturbationResult {
  Tensor delta;                    // [n, d]
  Tensor x_adv;                    // [n, d]
  std::vector<bool> success;       // prediction differs from the true label
  std::vector<double> loss_achieved;
  std::vector<Tensor> trajectory;  // per-iteration step directions, when captured
  std::vector<bool> converged;     // deepfool only
};

PerturbationResult fgsm(const Model& m, const Tensor& x, const std::vector<int>& y, double eps);
PerturbationResult step_ll(const Model& m, const Tensor& x, const std::vector<int>& y, double eps);
PerturbationResult pgd(const Model& m, const Tensor& x, const std::vector<int>& y,
                       const AttackSpec& spec);
PerturbationResult pgd_unbounded(const Model& m, const Tensor& x, const std::vector<int>& y,
                                 int iterations, double step);
/// Model-independent control attack; success/loss filled only when a model is given.
PerturbationResult random_sign(const Tensor& x, const std::vector<int>& y, double eps,
                               std::uint64_t seed, const Model* m = nullptr);
PerturbationResult spsa(const Model& m, const Tensor& x, const std::vector<int>& y,
                        const AttackSpec& spec);
PerturbationResult deepfool(const Model& m, const Tensor& x, const std::vector<int>& y,
                            int max_iter, double overshoot);

/// Coordinatewise clamp of delta to [-eps, +eps].
Tensor project_linf(const Tensor& delta, double eps);

/// Dispatch by spec.kind.
PerturbationResult run_attack(const Model& m, const Tensor& x, const std::vector<int>& y,
                              const AttackSpec& spec);

/// Binary replay artifact: header + deltas + checksum.
void save_perturbation(const PerturbationResult& r, const std::string& path);
PerturbationResult load_perturbation(const std::string& path);

}  // namespace gradmask
