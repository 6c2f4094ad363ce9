#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gradmask/dataset.hpp"
#include "gradmask/model.hpp"

namespace gradmask {

/// One metric over one evaluation subset. mean/std are recomputable from
/// per_example; excluded counts examples dropped by the metric's own rule.
struct MetricReport {
  std::string metric;
  std::optional<double> epsilon;  // empty for epsilon-independent metrics
  Split split = Split::kTest;
  std::string model_id;
  std::string config_digest;
  std::size_t n = 0;
  std::size_t excluded = 0;
  std::vector<double> per_example;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation

  void finalize();  // fills n/mean/stddev from per_example
};

/// a.b / (|a||b|); 0 when either norm is below 1e-12.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// E[ |grad_x L(x,y)|_2 ] per example.
MetricReport metric_gradient_norm(const Model& m, const LabeledDataset& ds);

/// E[ cos(FGSM(x,y), PGD(x,y)) ] over effective perturbations x_adv - x.
/// PGD: 10 iterations, relative step 1/4, no random start.
MetricReport metric_fgsm_pgd_cosine(const Model& m, const LabeledDataset& ds, double eps);

/// E[ cos(f(x'), f(x)) ] with f(z) = grad_z(l_{k(x')}(z) - l_{k(x)}(z)) and x'
/// the DeepFool point. Non-converged examples are excluded and counted.
MetricReport metric_robustness_information(const Model& m, const LabeledDataset& ds);

/// E[ |lhat(x') - l(x')| / |l(x')| ] with lhat the first-order expansion of the
/// predicted-class logit around x and x' = x + delta_FGSM(eps). Examples with
/// |l(x')| < 1e-9 are excluded and counted.
MetricReport metric_linearization_error(const Model& m, const LabeledDataset& ds, double eps);

/// E[ mean_i cos(p_i, p_{i+1}) ] over consecutive PGD step directions
/// (10 iterations, relative step 1/4, no random start, trajectory captured).
MetricReport metric_pgd_collinearity(const Model& m, const LabeledDataset& ds, double eps);

struct MetricSuiteResult {
  std::vector<MetricReport> reports;
  std::vector<std::string> failures;  // "metric_name: message" per failed metric
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "gradient_norm", "fgsm_pgd_cosine", "robustness_information", "linearization_error",
      "pgd_collinearity"};
  return names;
}

/// All five metrics on one subset: cosine/linearization/collinearity once per
/// epsilon, gradient-norm and robustness-information once. Individual metric
/// failures are collected, not fatal.
MetricSuiteResult run_metric_suite(const Model& m, const LabeledDataset& ds,
                                   const std::vector<double>& eps_list,
                                   const std::string& model_id = "",
                                   const std::string& config_digest = "");

}  // namespace gradmask
