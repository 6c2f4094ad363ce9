#include "gradmask/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradmask/rng.hpp"

namespace gradmask {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kAdvStream = 0x61647661;

struct Sgd {
  double lr, momentum;
  std::vector<std::vector<double>> velocity;

  explicit Sgd(const Model& m, double lr_, double mom) : lr(lr_), momentum(mom) {
    for (const auto& p : m.params) velocity.emplace_back(p.value->size(), 0.0);
  }

  void step(Model& m, const std::vector<std::vector<double>>& grads) {
    for (std::size_t k = 0; k < m.params.size(); ++k) {
      auto& v = velocity[k];
      auto& w = *m.params[k].value;
      const auto& g = grads[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = momentum * v[i] - lr * g[i];
        w[i] += v[i];
      }
    }
  }
};

Tensor slice_rows(const Tensor& x, const std::vector<std::size_t>& idx, std::size_t lo,
                  std::size_t hi) {
  const std::size_t d = x.dim(1);
  std::vector<double> out((hi - lo) * d);
  for (std::size_t i = lo; i < hi; ++i)
    for (std::size_t j = 0; j < d; ++j) out[(i - lo) * d + j] = x.at2(idx[i], j);
  return Tensor::from_data({hi - lo, d}, std::move(out));
}

std::vector<int> slice_labels(const std::vector<int>& y, const std::vector<std::size_t>& idx,
                              std::size_t lo, std::size_t hi) {
  std::vector<int> out(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) out[i - lo] = y[idx[i]];
  return out;
}

double global_grad_norm(const std::vector<std::vector<double>>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g) s += v * v;
  return std::sqrt(s);
}

}  // namespace

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kStandard: return "standard";
    case Regime::kAdversarial: return "adversarial";
    case Regime::kJacobian: return "jacobian";
    case Regime::kGradClip: return "grad_clip";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  if (s == "standard") return Regime::kStandard;
  if (s == "adversarial") return Regime::kAdversarial;
  if (s == "jacobian") return Regime::kJacobian;
  if (s == "grad_clip") return Regime::kGradClip;
  throw ValueError("unknown training regime '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValueError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ValueError("train config: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ValueError("train config: learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ValueError("train config: momentum in [0,1)");
  if (lambda < 0.0) throw ValueError("train config: lambda must be >= 0");
  if (clip_threshold.has_value() && *clip_threshold <= 0.0)
    throw ValueError("train config: clip_threshold must be > 0");
  if (regime == Regime::kAdversarial) attack.validate();
}

TrainReport train(const ModelSpec& spec, const LabeledDataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.split != Split::kTrain)
    throw ValueError("train: dataset split must be train, got " + to_string(dataset.split));
  if (dataset.size() == 0) throw ValueError("train: dataset is empty");

  TrainReport report;
  Model model = init_model(spec);
  Sgd opt(model, cfg.learning_rate, cfg.momentum);
  const std::size_t n = dataset.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  // Used only by the grad_clip auto rule.
  std::vector<double> epoch1_norms;
  double clip = cfg.clip_threshold.value_or(0.0);
  bool clip_active = cfg.regime == Regime::kGradClip && cfg.clip_threshold.has_value();

  LabeledDataset monitor;
  if (cfg.co_monitor) {
    monitor = subsample(dataset, std::min<std::size_t>(cfg.monitor_n, n), cfg.seed ^ 0x6d6f6e);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle = Rng(cfg.seed).fork(kShuffleStream, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(shuffle.below(n - i));
      std::swap(order[i], order[j]);
    }

    std::size_t batch_index = 0;
    for (std::size_t lo = 0; lo < n; lo += bs, ++batch_index) {
      const std::size_t hi = std::min(n, lo + bs);
      Tensor xb = slice_rows(dataset.x, order, lo, hi);
      std::vector<int> yb = slice_labels(dataset.y, order, lo, hi);

      if (cfg.regime == Regime::kAdversarial) {
        AttackSpec inner = cfg.attack;
        inner.seed = Rng(cfg.seed)
                         .fork(kAdvStream, (static_cast<std::uint64_t>(epoch) << 24) | batch_index)
                         .next_u64();
        PerturbationResult pr = run_attack(model, xb, yb, inner);
        // Inner attack contract: inside the epsilon ball and inside [0,1].
        for (double dv : pr.delta.data()) {
          if (std::abs(dv) > inner.epsilon + 1e-9)
            throw Error("adversarial training: inner attack left the epsilon ball");
        }
        for (double xv : pr.x_adv.data()) {
          if (xv < -1e-12 || xv > 1.0 + 1e-12)
            throw Error("adversarial training: inner attack left [0,1]");
        }
        xb = pr.x_adv;
      }

      std::vector<Tensor> leaves;
      Tensor obj = loss(model, xb, yb, &leaves);
      double batch_loss = obj.value();

      if (cfg.regime == Regime::kJacobian && cfg.lambda > 0.0) {
        // R = (1/n) sum_i sum_c |grad_x l_c(x_i)|^2, value computed exactly from
        // the per-class input gradients. Its parameter gradient is obtained
        // without double backward: with v = grad_x l_c detached,
        // d|v|^2/dtheta = 2 v^T d(grad_x l_c)/dtheta, and the directional
        // derivative v^T grad_x l_c is a central difference of two plain
        // forward passes. The surrogate below has d(surrogate)/dtheta =
        // dR/dtheta + O(h^2) while its own value is ~2R (unused).
        const std::size_t nb = xb.dim(0), d = xb.dim(1);
        const double h = 1e-5;
        Tensor reg_total;
        std::vector<std::vector<Tensor>> extra_leaf_sets;
        double exact_r = 0.0;
        for (std::size_t c = 0; c < model.spec.num_classes; ++c) {
          const std::vector<int> cls(nb, static_cast<int>(c));
          const Tensor g = logit_gradient(model, xb, cls);
          std::vector<double> norms(nb, 0.0);
          for (std::size_t i = 0; i < nb; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += g.at2(i, j) * g.at2(i, j);
            norms[i] = std::sqrt(s);
            exact_r += s;
          }
          std::vector<double> plus(nb * d), minus(nb * d);
          for (std::size_t i = 0; i < nb; ++i) {
            const double inv = norms[i] > 0.0 ? 1.0 / norms[i] : 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dir = g.at2(i, j) * inv;
              plus[i * d + j] = xb.at2(i, j) + h * dir;
              minus[i * d + j] = xb.at2(i, j) - h * dir;
            }
          }
          std::vector<Tensor> lvp, lvm;
          const Tensor lp = logits(model, Tensor::from_data({nb, d}, std::move(plus)), &lvp);
          const Tensor lm = logits(model, Tensor::from_data({nb, d}, std::move(minus)), &lvm);
          extra_leaf_sets.push_back(lvp);
          extra_leaf_sets.push_back(lvm);
          Tensor term = mul_scalar(sub(weighted_column_sum(lp, c, norms),
                                       weighted_column_sum(lm, c, norms)),
                                   1.0 / (static_cast<double>(nb) * h));
          reg_total = reg_total.defined() ? add(reg_total, term) : term;
        }
        exact_r /= static_cast<double>(nb);
        batch_loss += cfg.lambda * exact_r;
        obj = add(obj, mul_scalar(reg_total, cfg.lambda));
        // One backward over the joint graph; per-parameter grads summed over
        // every leaf set wrapping that parameter.
        if (!std::isfinite(obj.value()))
          throw DivergenceError("loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch_index));
        Gradients grads = backward(obj);
        std::vector<std::vector<double>> pgrads;
        for (std::size_t k = 0; k < leaves.size(); ++k) {
          Tensor gk = grads.grad_of(leaves[k]);
          std::vector<double> acc = gk.data();
          for (const auto& set : extra_leaf_sets) {
            const Tensor ge = grads.grad_of(set[k]);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += ge.at(i);
          }
          pgrads.push_back(std::move(acc));
        }
        opt.step(model, pgrads);
        report.final_loss = batch_loss;
        continue;
      }

      if (!std::isfinite(batch_loss))
        throw DivergenceError("loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));

      Gradients grads = backward(obj);
      std::vector<std::vector<double>> pgrads;
      pgrads.reserve(leaves.size());
      for (const auto& leaf : leaves) pgrads.push_back(grads.grad_of(leaf).data());

      if (cfg.regime == Regime::kGradClip) {
        const double norm = global_grad_norm(pgrads);
        if (!cfg.clip_threshold.has_value() && epoch == 0) {
          epoch1_norms.push_back(norm);  // epoch 1 runs unclipped, collecting norms
        } else if (clip_active && norm > clip) {
          const double scale = clip / norm;
          for (auto& g : pgrads)
            for (double& v : g) v *= scale;
        }
      }

      opt.step(model, pgrads);
      report.final_loss = batch_loss;
    }

    if (cfg.regime == Regime::kGradClip && !cfg.clip_threshold.has_value() && epoch == 0) {
      std::vector<double> sorted = epoch1_norms;
      std::sort(sorted.begin(), sorted.end());
      clip = 0.5 * sorted[sorted.size() / 2];
      if (clip <= 0.0) clip = 1e-6;
      clip_active = true;
    }

    report.clean_accuracy.push_back(evaluate_accuracy(model, dataset));
    if (cfg.co_monitor) {
      AttackSpec f;
      f.kind = AttackKind::kFgsm;
      f.epsilon = cfg.monitor_epsilon;
      AttackSpec p;
      p.kind = AttackKind::kPgd;
      p.epsilon = cfg.monitor_epsilon;
      p.iterations = 10;
      p.relative_step = 0.25;
      p.random_start = false;
      p.seed = cfg.seed;
      report.fgsm_accuracy.push_back(evaluate_accuracy(model, monitor, f));
      report.pgd_accuracy.push_back(evaluate_accuracy(model, monitor, p));
    }
  }

  model.provenance = to_string(cfg.regime);
  if (cfg.regime == Regime::kAdversarial)
    model.provenance += "(" + to_string(cfg.attack.kind) + ",eps=" + std::to_string(cfg.attack.epsilon) + ")";
  if (cfg.regime == Regime::kJacobian)
    model.provenance += "(lambda=" + std::to_string(cfg.lambda) + ")";
  if (cfg.regime == Regime::kGradClip) {
    model.provenance += "(clip=" + std::to_string(clip) + ")";
    report.clip_threshold_used = clip;
  }
  report.model = std::move(model);
  if (cfg.co_monitor) report.co_detected = detect_catastrophic_overfitting(report);
  return report;
}

double evaluate_accuracy(const Model& m, const LabeledDataset& ds,
                         const std::optional<AttackSpec>& attack) {
  if (ds.size() == 0) throw ValueError("evaluate_accuracy: dataset is empty");
  std::vector<int> pred;
  if (attack.has_value()) {
    PerturbationResult pr = run_attack(m, ds.x, ds.y, *attack);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (!pr.success[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(ds.size());
  }
  pred = predict(m, ds.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (pred[i] == ds.y[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

bool detect_catastrophic_overfitting(const TrainReport& report, double fgsm_floor,
                                     double pgd_ceiling) {
  if (report.fgsm_accuracy.empty())
    throw ValueError("detect_catastrophic_overfitting: co_monitor was not enabled");
  for (std::size_t e = 0; e < report.fgsm_accuracy.size(); ++e) {
    if (report.fgsm_accuracy[e] >= fgsm_floor && report.pgd_accuracy[e] <= pgd_ceiling)
      return true;
  }
  return false;
}

}  // namespace gradmask
