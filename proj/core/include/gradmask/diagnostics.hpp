#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gradmask/attacks.hpp"
#include "gradmask/dataset.hpp"
#include "gradmask/metrics.hpp"
#include "gradmask/model.hpp"

namespace gradmask {

struct ChecklistOptions {
  double margin = 0.02;            // absolute accuracy margin for every flag
  int spsa_samples = 256;
  int spsa_iterations = 15;
  int pgd_iterations = 25;
  double pgd_relative_step = 0.1;
  int unbounded_iterations = 200;
  double unbounded_step = 0.05;
  std::uint64_t seed = 0;
};

/// Black box beats the single-step white-box attack.
struct BlackboxFlag {
  bool flag = false;
  double spsa_acc = 0.0, fgsm_acc = 0.0, pgd_acc = 0.0;
  double epsilon = 0.0;  // the epsilon the flag fired at (or the first tested)
};

/// Unbounded attack fails to reach 100% fooling.
struct UnboundedFlag {
  bool flag = false;
  double unbounded_acc = 0.0;
};

/// Accuracy rises somewhere along the FGSM distortion curve.
struct MonotonicityFlag {
  bool flag = false;
  std::vector<double> epsilons;
  std::vector<double> fgsm_acc_by_eps;
};

struct GapQuantities {
  double epsilon = 0.0;
  double fgsm_acc = 0.0;
  double pgd_acc = 0.0;
  double strong_acc = 0.0;  // multi-restart PGD, the AutoAttack stand-in
  double fgsm_minus_strong = 0.0;
  double fgsm_minus_pgd = 0.0;
};

struct ChecklistReport {
  BlackboxFlag blackbox_beats_whitebox;
  UnboundedFlag unbounded_not_total;
  MonotonicityFlag distortion_non_monotone;
  GapQuantities single_vs_strong_gap;
  bool overall_suspect = false;  // OR of the three behavioural flags
  std::vector<std::string> errors;  // per-flag failures, report stays partial
};

ChecklistReport run_checklist(const Model& m, const LabeledDataset& ds,
                              const std::vector<double>& eps_list,
                              const ChecklistOptions& opts = {});

/// Flag logic over accuracies that were already measured (one entry per
/// epsilon in eps_list). Lets a batch driver share attack evaluations between
/// the benchmark table and the checklist.
ChecklistReport assemble_checklist(const std::vector<double>& eps_list,
                                   const std::vector<double>& fgsm_acc,
                                   const std::vector<double>& pgd_acc,
                                   const std::vector<double>& spsa_acc, double unbounded_acc,
                                   const GapQuantities& gaps, double margin = 0.02);

/// FGSM accuracy, benchmark-PGD accuracy (25 iters, rel. step 1/10), strong
/// accuracy (PGD, 50 iters, 10 restarts, rel. step 1/10), and both gaps.
GapQuantities gap_quantities(const Model& m, const LabeledDataset& ds, double eps,
                             std::uint64_t seed = 0);

struct CrossSection {
  std::vector<double> t_grid;                       // strictly increasing, starts at 0
  std::vector<std::vector<double>> per_example;     // [n][k] loss curves
  std::vector<double> mean_curve, std_curve;        // [k]
  std::vector<std::optional<double>> boundary;      // per-example flip location
  std::optional<double> boundary_mean, boundary_std;
};

/// Loss along the signed-gradient direction: L(clamp(x + t*sign(grad_x L)))
/// on a uniform k-point grid over [0, t_max]; flip locations refined by
/// 20-step bisection between neighbouring grid points.
CrossSection loss_cross_section(const Model& m, const LabeledDataset& ds, double t_max,
                                std::size_t k);

struct RobustnessScore {
  double value = 0.0;        // E[ |delta|_2 / |x|_2 ] over converged examples
  std::size_t converged = 0;
  std::size_t excluded = 0;
};

/// DeepFool-based robustness; requires convergence on at least half the examples.
RobustnessScore robustness_score(const Model& m, const LabeledDataset& ds);

double pearson(const std::vector<double>& a, const std::vector<double>& b);
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct ZooEntry {
  std::string name;
  std::vector<std::string> metric_labels;
  std::vector<double> metric_means;
  GapQuantities gaps;
};

struct CorrelationMatrix {
  std::vector<std::string> labels;                       // metrics then gap quantities
  std::vector<std::vector<std::optional<double>>> pearson_r;  // empty = undefined (zero variance)
  std::size_t metric_count = 0;
};

/// Pearson correlations across the model zoo between metric means and gap
/// quantities (plus the metric-vs-metric block). Zero-variance columns give
/// undefined entries rather than NaN.
CorrelationMatrix correlation_matrix(const std::vector<ZooEntry>& zoo);

}  // namespace gradmask
