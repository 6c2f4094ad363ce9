#include "gradmask/metrics.hpp"

#include <cmath>

#include "gradmask/attacks.hpp"

namespace gradmask {

namespace {

AttackSpec metric_pgd_spec(double eps, bool capture) {
  AttackSpec s;
  s.kind = AttackKind::kPgd;
  s.epsilon = eps;
  s.iterations = 10;
  s.relative_step = 0.25;
  s.restarts = 1;
  s.random_start = false;  // the first step must be honestly comparable to FGSM
  s.capture_trajectory = capture;
  return s;
}

std::vector<double> row(const Tensor& t, std::size_t i) {
  const std::size_t d = t.dim(1);
  return std::vector<double>(t.data().begin() + i * d, t.data().begin() + (i + 1) * d);
}

}  // namespace

void MetricReport::finalize() {
  n = per_example.size();
  if (n == 0) {
    mean = stddev = 0.0;
    return;
  }
  double s = 0.0;
  for (double v : per_example) s += v;
  mean = s / static_cast<double>(n);
  double sq = 0.0;
  for (double v : per_example) sq += (v - mean) * (v - mean);
  stddev = std::sqrt(sq / static_cast<double>(n));
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ShapeError("cosine_similarity length mismatch: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return dot / (na * nb);
}

MetricReport metric_gradient_norm(const Model& m, const LabeledDataset& ds) {
  if (ds.size() == 0) throw ValueError("metric_gradient_norm: dataset is empty");
  MetricReport r;
  r.metric = "gradient_norm";
  r.split = ds.split;
  const Tensor g = input_gradient(m, ds.x, ds.y);
  const std::size_t n = ds.size(), d = ds.dim();
  r.per_example.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += g.at2(i, j) * g.at2(i, j);
    r.per_example[i] = std::sqrt(s);
  }
  r.finalize();
  return r;
}

MetricReport metric_fgsm_pgd_cosine(const Model& m, const LabeledDataset& ds, double eps) {
  if (eps <= 0.0) throw ValueError("metric_fgsm_pgd_cosine: epsilon must be > 0");
  if (ds.size() == 0) throw ValueError("metric_fgsm_pgd_cosine: dataset is empty");
  MetricReport r;
  r.metric = "fgsm_pgd_cosine";
  r.epsilon = eps;
  r.split = ds.split;
  const PerturbationResult f = fgsm(m, ds.x, ds.y, eps);
  const PerturbationResult p = pgd(m, ds.x, ds.y, metric_pgd_spec(eps, false));
  r.per_example.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    r.per_example[i] = cosine_similarity(row(f.delta, i), row(p.delta, i));
  }
  r.finalize();
  return r;
}

MetricReport metric_robustness_information(const Model& m, const LabeledDataset& ds) {
  if (ds.size() == 0) throw ValueError("metric_robustness_information: dataset is empty");
  MetricReport r;
  r.metric = "robustness_information";
  r.split = ds.split;
  const PerturbationResult df = deepfool(m, ds.x, ds.y, 50, 0.02);
  const std::vector<int> k_clean = predict(m, ds.x);
  const std::vector<int> k_adv = predict(m, df.x_adv);
  const std::size_t n = ds.size();

  // f(z) = grad_z (l_{k(x')}(z) - l_{k(x)}(z)), evaluated at x' and at x.
  const Tensor g_adv_new = logit_gradient(m, df.x_adv, k_adv);
  const Tensor g_adv_old = logit_gradient(m, df.x_adv, k_clean);
  const Tensor g_cln_new = logit_gradient(m, ds.x, k_adv);
  const Tensor g_cln_old = logit_gradient(m, ds.x, k_clean);

  const std::size_t d = ds.dim();
  for (std::size_t i = 0; i < n; ++i) {
    if (!df.converged[i]) {
      ++r.excluded;
      continue;
    }
    std::vector<double> fa(d), fc(d);
    for (std::size_t j = 0; j < d; ++j) {
      fa[j] = g_adv_new.at2(i, j) - g_adv_old.at2(i, j);
      fc[j] = g_cln_new.at2(i, j) - g_cln_old.at2(i, j);
    }
    r.per_example.push_back(cosine_similarity(fa, fc));
  }
  if (r.per_example.empty())
    throw ValueError("metric_robustness_information: DeepFool converged on no examples");
  r.finalize();
  return r;
}

MetricReport metric_linearization_error(const Model& m, const LabeledDataset& ds, double eps) {
  if (eps <= 0.0) throw ValueError("metric_linearization_error: epsilon must be > 0");
  if (ds.size() == 0) throw ValueError("metric_linearization_error: dataset is empty");
  MetricReport r;
  r.metric = "linearization_error";
  r.epsilon = eps;
  r.split = ds.split;
  const std::vector<int> k = predict(m, ds.x);
  const PerturbationResult f = fgsm(m, ds.x, ds.y, eps);
  const Tensor l_clean = logits(m, ds.x);
  const Tensor l_adv = logits(m, f.x_adv);
  const Tensor g = logit_gradient(m, ds.x, k);  // rows: grad of the predicted-class logit
  const std::size_t n = ds.size(), d = ds.dim();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ki = static_cast<std::size_t>(k[i]);
    const double true_val = l_adv.at2(i, ki);
    if (std::abs(true_val) < 1e-9) {
      ++r.excluded;
      continue;
    }
    double taylor = l_clean.at2(i, ki);
    for (std::size_t j = 0; j < d; ++j) taylor += g.at2(i, j) * f.delta.at2(i, j);
    r.per_example.push_back(std::abs(taylor - true_val) / std::abs(true_val));
  }
  if (r.per_example.empty())
    throw ValueError("metric_linearization_error: every example was excluded");
  r.finalize();
  return r;
}

MetricReport metric_pgd_collinearity(const Model& m, const LabeledDataset& ds, double eps) {
  if (eps <= 0.0) throw ValueError("metric_pgd_collinearity: epsilon must be > 0");
  if (ds.size() == 0) throw ValueError("metric_pgd_collinearity: dataset is empty");
  MetricReport r;
  r.metric = "pgd_collinearity";
  r.epsilon = eps;
  r.split = ds.split;
  const PerturbationResult p = pgd(m, ds.x, ds.y, metric_pgd_spec(eps, true));
  const std::size_t iters = p.trajectory.size();
  r.per_example.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t + 1 < iters; ++t) {
      acc += cosine_similarity(row(p.trajectory[t], i), row(p.trajectory[t + 1], i));
    }
    r.per_example[i] = acc / static_cast<double>(iters - 1);
  }
  r.finalize();
  return r;
}

MetricSuiteResult run_metric_suite(const Model& m, const LabeledDataset& ds,
                                   const std::vector<double>& eps_list,
                                   const std::string& model_id,
                                   const std::string& config_digest) {
  if (eps_list.empty()) throw ValueError("run_metric_suite: epsilon list is empty");
  MetricSuiteResult out;
  auto push = [&](const char* name, auto&& fn) {
    try {
      MetricReport r = fn();
      r.model_id = model_id;
      r.config_digest = config_digest;
      out.reports.push_back(std::move(r));
    } catch (const std::exception& e) {
      out.failures.push_back(std::string(name) + ": " + e.what());
    }
  };
  push("gradient_norm", [&] { return metric_gradient_norm(m, ds); });
  push("robustness_information", [&] { return metric_robustness_information(m, ds); });
  for (double eps : eps_list) {
    push("fgsm_pgd_cosine", [&] { return metric_fgsm_pgd_cosine(m, ds, eps); });
    push("linearization_error", [&] { return metric_linearization_error(m, ds, eps); });
    push("pgd_collinearity", [&] { return metric_pgd_collinearity(m, ds, eps); });
  }
  return out;
}

}  // namespace gradmask
