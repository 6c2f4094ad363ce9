#include "gradmask/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradmask/training.hpp"

namespace gradmask {

namespace {

AttackSpec benchmark_pgd(double eps, const ChecklistOptions& o) {
  AttackSpec s;
  s.kind = AttackKind::kPgd;
  s.epsilon = eps;
  s.iterations = o.pgd_iterations;
  s.relative_step = o.pgd_relative_step;
  s.random_start = true;
  s.seed = o.seed;
  return s;
}

AttackSpec benchmark_spsa(double eps, const ChecklistOptions& o) {
  AttackSpec s;
  s.kind = AttackKind::kSpsa;
  s.epsilon = eps;
  s.iterations = o.spsa_iterations;
  s.spsa_samples = o.spsa_samples;
  s.seed = o.seed;
  return s;
}

}  // namespace

ChecklistReport assemble_checklist(const std::vector<double>& eps_list,
                                   const std::vector<double>& fgsm_acc,
                                   const std::vector<double>& pgd_acc,
                                   const std::vector<double>& spsa_acc, double unbounded_acc,
                                   const GapQuantities& gaps, double margin) {
  if (eps_list.empty()) throw ValueError("assemble_checklist: epsilon list is empty");
  if (fgsm_acc.size() != eps_list.size() || pgd_acc.size() != eps_list.size() ||
      spsa_acc.size() != eps_list.size())
    throw ValueError("assemble_checklist: accuracy series do not match the epsilon list");
  ChecklistReport r;
  // Black box beats the single-step white-box attack at any tested epsilon.
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const bool fire = spsa_acc[i] < fgsm_acc[i] - margin;
    if (i == 0 || (fire && !r.blackbox_beats_whitebox.flag)) {
      r.blackbox_beats_whitebox = {fire, spsa_acc[i], fgsm_acc[i], pgd_acc[i], eps_list[i]};
    }
    r.distortion_non_monotone.epsilons.push_back(eps_list[i]);
    r.distortion_non_monotone.fgsm_acc_by_eps.push_back(fgsm_acc[i]);
  }
  r.unbounded_not_total = {unbounded_acc > 0.0, unbounded_acc};
  for (std::size_t i = 0; i + 1 < fgsm_acc.size(); ++i) {
    if (fgsm_acc[i + 1] > fgsm_acc[i] + margin) r.distortion_non_monotone.flag = true;
  }
  r.single_vs_strong_gap = gaps;
  r.overall_suspect = r.blackbox_beats_whitebox.flag || r.unbounded_not_total.flag ||
                      r.distortion_non_monotone.flag;
  return r;
}

ChecklistReport run_checklist(const Model& m, const LabeledDataset& ds,
                              const std::vector<double>& eps_list,
                              const ChecklistOptions& opts) {
  if (eps_list.empty()) throw ValueError("run_checklist: epsilon list is empty");
  std::vector<double> fgsm_acc, pgd_acc, spsa_acc;
  ChecklistReport partial;
  bool attacks_ok = true;
  try {
    for (double eps : eps_list) {
      AttackSpec f;
      f.kind = AttackKind::kFgsm;
      f.epsilon = eps;
      fgsm_acc.push_back(evaluate_accuracy(m, ds, f));
      pgd_acc.push_back(evaluate_accuracy(m, ds, benchmark_pgd(eps, opts)));
      spsa_acc.push_back(evaluate_accuracy(m, ds, benchmark_spsa(eps, opts)));
    }
  } catch (const std::exception& e) {
    partial.errors.push_back(std::string("blackbox: ") + e.what());
    attacks_ok = false;
  }

  double unbounded_acc = 0.0;
  try {
    AttackSpec u;
    u.kind = AttackKind::kPgdUnbounded;
    u.iterations = opts.unbounded_iterations;
    u.unbounded_step = opts.unbounded_step;
    unbounded_acc = evaluate_accuracy(m, ds, u);
  } catch (const std::exception& e) {
    partial.errors.push_back(std::string("unbounded: ") + e.what());
  }

  GapQuantities gaps;
  try {
    gaps = gap_quantities(m, ds, eps_list.front(), opts.seed);
  } catch (const std::exception& e) {
    partial.errors.push_back(std::string("gaps: ") + e.what());
  }

  if (!attacks_ok) {
    partial.unbounded_not_total = {unbounded_acc > 0.0, unbounded_acc};
    partial.single_vs_strong_gap = gaps;
    partial.overall_suspect = partial.unbounded_not_total.flag;
    return partial;
  }
  ChecklistReport r =
      assemble_checklist(eps_list, fgsm_acc, pgd_acc, spsa_acc, unbounded_acc, gaps, opts.margin);
  r.errors = partial.errors;
  return r;
}

GapQuantities gap_quantities(const Model& m, const LabeledDataset& ds, double eps,
                             std::uint64_t seed) {
  if (eps < 0.0) throw ValueError("gap_quantities: epsilon must be >= 0");
  GapQuantities g;
  g.epsilon = eps;
  if (eps == 0.0) {
    const double clean = evaluate_accuracy(m, ds);
    g.fgsm_acc = g.pgd_acc = g.strong_acc = clean;
  } else {
    AttackSpec f;
    f.kind = AttackKind::kFgsm;
    f.epsilon = eps;
    g.fgsm_acc = evaluate_accuracy(m, ds, f);

    AttackSpec p;
    p.kind = AttackKind::kPgd;
    p.epsilon = eps;
    p.iterations = 25;
    p.relative_step = 0.1;
    p.seed = seed;
    g.pgd_acc = evaluate_accuracy(m, ds, p);

    AttackSpec s = p;  // the AutoAttack substitution: more iterations, restarts
    s.iterations = 50;
    s.restarts = 10;
    g.strong_acc = evaluate_accuracy(m, ds, s);
  }
  g.fgsm_minus_strong = g.fgsm_acc - g.strong_acc;
  g.fgsm_minus_pgd = g.fgsm_acc - g.pgd_acc;
  return g;
}

CrossSection loss_cross_section(const Model& m, const LabeledDataset& ds, double t_max,
                                std::size_t k) {
  if (t_max <= 0.0) throw ValueError("loss_cross_section: t_max must be > 0");
  if (k < 2) throw ValueError("loss_cross_section: need at least 2 grid points");
  if (ds.size() == 0) throw ValueError("loss_cross_section: dataset is empty");

  const std::size_t n = ds.size(), d = ds.dim();
  const Tensor g = input_gradient(m, ds.x, ds.y);
  std::vector<double> dir(n * d);
  for (std::size_t i = 0; i < n * d; ++i) {
    const double v = g.data()[i];
    dir[i] = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  }
  const std::vector<int> k_clean = predict(m, ds.x);

  CrossSection cs;
  cs.t_grid.resize(k);
  for (std::size_t j = 0; j < k; ++j)
    cs.t_grid[j] = t_max * static_cast<double>(j) / static_cast<double>(k - 1);
  cs.per_example.assign(n, std::vector<double>(k, 0.0));

  auto point_at = [&](double t) {
    std::vector<double> p(n * d);
    for (std::size_t i = 0; i < n * d; ++i) {
      double v = ds.x.data()[i] + t * dir[i];
      p[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return Tensor::from_data({n, d}, std::move(p));
  };

  std::vector<std::vector<int>> preds(k);
  for (std::size_t j = 0; j < k; ++j) {
    const Tensor pt = point_at(cs.t_grid[j]);
    const std::vector<double> losses = per_example_loss(m, pt, ds.y);
    preds[j] = predict(m, pt);
    for (std::size_t i = 0; i < n; ++i) cs.per_example[i][j] = losses[i];
  }

  cs.mean_curve.resize(k);
  cs.std_curve.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cs.per_example[i][j];
    const double mu = s / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dlt = cs.per_example[i][j] - mu;
      sq += dlt * dlt;
    }
    cs.mean_curve[j] = mu;
    cs.std_curve[j] = std::sqrt(sq / static_cast<double>(n));
  }

  // First grid index where the prediction flips from the clean one, refined
  // by bisection between the neighbouring grid points.
  cs.boundary.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 1; j < k; ++j) {
      if (preds[j][i] != k_clean[i]) {
        double lo = cs.t_grid[j - 1], hi = cs.t_grid[j];
        for (int step = 0; step < 20; ++step) {
          const double mid = 0.5 * (lo + hi);
          std::vector<double> p(d);
          for (std::size_t jj = 0; jj < d; ++jj) {
            double v = ds.x.at2(i, jj) + mid * dir[i * d + jj];
            p[jj] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
          }
          if (predict(m, Tensor::from_data({1, d}, std::move(p)))[0] != k_clean[i])
            hi = mid;
          else
            lo = mid;
        }
        cs.boundary[i] = hi;
        break;
      }
    }
  }
  std::vector<double> bs;
  for (const auto& b : cs.boundary)
    if (b.has_value()) bs.push_back(*b);
  if (!bs.empty()) {
    double s = std::accumulate(bs.begin(), bs.end(), 0.0);
    const double mu = s / static_cast<double>(bs.size());
    double sq = 0.0;
    for (double v : bs) sq += (v - mu) * (v - mu);
    cs.boundary_mean = mu;
    cs.boundary_std = std::sqrt(sq / static_cast<double>(bs.size()));
  }
  return cs;
}

RobustnessScore robustness_score(const Model& m, const LabeledDataset& ds) {
  if (ds.size() == 0) throw ValueError("robustness_score: dataset is empty");
  const PerturbationResult df = deepfool(m, ds.x, ds.y, 50, 0.02);
  RobustnessScore out;
  const std::size_t n = ds.size(), d = ds.dim();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!df.converged[i]) {
      ++out.excluded;
      continue;
    }
    double dn = 0.0, xn = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dn += df.delta.at2(i, j) * df.delta.at2(i, j);
      xn += ds.x.at2(i, j) * ds.x.at2(i, j);
    }
    acc += std::sqrt(dn) / std::sqrt(xn);
    ++out.converged;
  }
  if (out.converged * 2 < n) {
    throw ValueError("robustness_score: DeepFool converged on only " +
                     std::to_string(out.converged) + " of " + std::to_string(n) + " examples");
  }
  out.value = acc / static_cast<double>(out.converged);
  return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ValueError("pearson: need two equal-length series of length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0)
    throw ValueError("pearson: zero-variance input");
  return cov / std::sqrt(va * vb);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;  // average rank for ties
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

CorrelationMatrix correlation_matrix(const std::vector<ZooEntry>& zoo) {
  if (zoo.size() < 3) throw ValueError("correlation_matrix: need at least 3 models");
  const auto& labels = zoo.front().metric_labels;
  for (const auto& z : zoo) {
    if (z.metric_labels != labels)
      throw ValueError("correlation_matrix: inconsistent metric labels across the zoo");
  }
  CorrelationMatrix cm;
  cm.metric_count = labels.size();
  cm.labels = labels;
  cm.labels.push_back("fgsm_minus_strong");
  cm.labels.push_back("fgsm_minus_pgd");

  std::vector<std::vector<double>> cols(cm.labels.size());
  for (const auto& z : zoo) {
    for (std::size_t i = 0; i < labels.size(); ++i) cols[i].push_back(z.metric_means[i]);
    cols[labels.size()].push_back(z.gaps.fgsm_minus_strong);
    cols[labels.size() + 1].push_back(z.gaps.fgsm_minus_pgd);
  }

  const std::size_t m = cm.labels.size();
  cm.pearson_r.assign(m, std::vector<std::optional<double>>(m));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      try {
        cm.pearson_r[i][j] = pearson(cols[i], cols[j]);
      } catch (const ValueError&) {
        cm.pearson_r[i][j] = std::nullopt;  // zero-variance column
      }
    }
  }
  return cm;
}

}  // namespace gradmask
