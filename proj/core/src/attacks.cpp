#include "gradmask/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "gradmask/rng.hpp"
#include "gradmask/version.hpp"
#include "json.hpp"

namespace gradmask {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// sign(0) = 0: a zero gradient coordinate carries no information, so no
// perturbation is injected there.
double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

constexpr std::uint64_t kPgdStartStream = 0x70676473;
constexpr std::uint64_t kRandomSignStream = 0x72616e64;
constexpr std::uint64_t kSpsaStream = 0x73707361;

// Shared epilogue: given the attacked points, store effective deltas, success
// against the true label, and final per-example loss.
PerturbationResult finish_result(const Model& m, const Tensor& x, const std::vector<int>& y,
                                 std::vector<double> adv) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> delta(n * d);
  for (std::size_t i = 0; i < n * d; ++i) delta[i] = adv[i] - x.data()[i];
  PerturbationResult r;
  r.x_adv = Tensor::from_data({n, d}, std::move(adv));
  r.delta = Tensor::from_data({n, d}, std::move(delta));
  const Tensor lv = logits(m, r.x_adv);
  const std::vector<int> pred = predict_logits(lv);
  r.success.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.success[i] = pred[i] != y[i];
  r.loss_achieved = softmax_cross_entropy(lv, y).data();
  return r;
}

}  // namespace

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kStepLl: return "step_ll";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kPgdUnbounded: return "pgd_unbounded";
    case AttackKind::kRandomSign: return "random_sign";
    case AttackKind::kSpsa: return "spsa";
    case AttackKind::kDeepFool: return "deepfool";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "fgsm") return AttackKind::kFgsm;
  if (s == "step_ll") return AttackKind::kStepLl;
  if (s == "pgd") return AttackKind::kPgd;
  if (s == "pgd_unbounded") return AttackKind::kPgdUnbounded;
  if (s == "random_sign") return AttackKind::kRandomSign;
  if (s == "spsa") return AttackKind::kSpsa;
  if (s == "deepfool") return AttackKind::kDeepFool;
  throw ValueError("unknown attack kind '" + s + "'");
}

void AttackSpec::validate() const {
  if (epsilon < 0.0) throw ValueError("attack spec: epsilon must be >= 0");
  if (iterations < 1) throw ValueError("attack spec: iterations must be >= 1");
  if (relative_step <= 0.0) throw ValueError("attack spec: relative_step must be > 0");
  if (restarts < 1) throw ValueError("attack spec: restarts must be >= 1");
  if (kind == AttackKind::kSpsa) {
    if (spsa_samples < 2 || spsa_samples % 2 != 0)
      throw ValueError("attack spec: spsa_samples must be even and >= 2");
    if (spsa_sigma <= 0.0) throw ValueError("attack spec: spsa_sigma must be > 0");
  }
  if (kind == AttackKind::kDeepFool) {
    if (deepfool_max_iter < 1) throw ValueError("attack spec: deepfool_max_iter must be >= 1");
    if (deepfool_overshoot < 0.0) throw ValueError("attack spec: overshoot must be >= 0");
  }
}

Tensor project_linf(const Tensor& delta, double eps) {
  if (eps < 0.0) throw ValueError("project_linf: epsilon must be >= 0");
  std::vector<double> out = delta.data();
  for (double& v : out) v = std::min(eps, std::max(-eps, v));
  return Tensor::from_data(delta.shape(), std::move(out));
}

PerturbationResult fgsm(const Model& m, const Tensor& x, const std::vector<int>& y, double eps) {
  if (eps < 0.0) throw ValueError("fgsm: epsilon must be >= 0");
  const Tensor g = input_gradient(m, x, y);
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> adv(n * d);
  for (std::size_t i = 0; i < n * d; ++i) adv[i] = clamp01(x.data()[i] + eps * sgn(g.data()[i]));
  return finish_result(m, x, y, std::move(adv));
}

PerturbationResult step_ll(const Model& m, const Tensor& x, const std::vector<int>& y,
                           double eps) {
  if (eps < 0.0) throw ValueError("step_ll: epsilon must be >= 0");
  if (m.spec.num_classes < 2) throw ValueError("step_ll needs at least 2 classes");
  const Tensor lv = logits(m, x);
  const std::size_t n = x.dim(0), c = m.spec.num_classes;
  std::vector<int> least(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (lv.at2(i, j) < lv.at2(i, arg)) arg = j;  // ties keep the lowest index
    least[i] = static_cast<int>(arg);
  }
  // Descend the loss toward the least-likely class.
  const Tensor g = input_gradient(m, x, least);
  const std::size_t d = x.dim(1);
  std::vector<double> adv(n * d);
  for (std::size_t i = 0; i < n * d; ++i) adv[i] = clamp01(x.data()[i] - eps * sgn(g.data()[i]));
  return finish_result(m, x, y, std::move(adv));
}

PerturbationResult pgd(const Model& m, const Tensor& x, const std::vector<int>& y,
                       const AttackSpec& spec) {
  spec.validate();
  if (spec.epsilon <= 0.0) throw ValueError("pgd: epsilon must be > 0");
  const std::size_t n = x.dim(0), d = x.dim(1);
  const double eps = spec.epsilon;
  const double alpha = spec.relative_step * eps;
  const auto& xv = x.data();

  std::vector<double> best_adv(xv);
  std::vector<double> best_loss(n, -1.0);
  std::vector<int> best_restart(n, 0);
  std::vector<std::vector<std::vector<double>>> trajectories;  // [restart][iter][n*d]
  if (spec.capture_trajectory) trajectories.resize(spec.restarts);

  for (int r = 0; r < spec.restarts; ++r) {
    std::vector<double> cur(n * d);
    if (spec.random_start) {
      // Counter-based per-example streams: parallel and serial runs agree.
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng(spec.seed).fork(kPgdStartStream, static_cast<std::uint64_t>(r) << 32 | i);
        for (std::size_t j = 0; j < d; ++j)
          cur[i * d + j] = clamp01(xv[i * d + j] + rng.uniform(-eps, eps));
      }
    } else {
      cur = xv;
    }
    for (int it = 0; it < spec.iterations; ++it) {
      const Tensor g =
          input_gradient(m, Tensor::from_data({n, d}, cur), y);
      std::vector<double> dir(n * d);
      for (std::size_t i = 0; i < n * d; ++i) dir[i] = sgn(g.data()[i]);
      if (spec.capture_trajectory) trajectories[r].push_back(dir);
      for (std::size_t i = 0; i < n * d; ++i) {
        double v = cur[i] + alpha * dir[i];
        v = std::min(xv[i] + eps, std::max(xv[i] - eps, v));  // project to the epsilon ball
        cur[i] = clamp01(v);
      }
    }
    const std::vector<double> fl =
        per_example_loss(m, Tensor::from_data({n, d}, cur), y);
    for (std::size_t i = 0; i < n; ++i) {
      if (fl[i] > best_loss[i]) {
        best_loss[i] = fl[i];
        best_restart[i] = r;
        for (std::size_t j = 0; j < d; ++j) best_adv[i * d + j] = cur[i * d + j];
      }
    }
  }

  PerturbationResult res = finish_result(m, x, y, std::move(best_adv));
  if (spec.capture_trajectory) {
    // Keep, per example, the trajectory of the restart that won.
    for (int it = 0; it < spec.iterations; ++it) {
      std::vector<double> step(n * d);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& src = trajectories[best_restart[i]][it];
        for (std::size_t j = 0; j < d; ++j) step[i * d + j] = src[i * d + j];
      }
      res.trajectory.push_back(Tensor::from_data({n, d}, std::move(step)));
    }
  }
  return res;
}

PerturbationResult pgd_unbounded(const Model& m, const Tensor& x, const std::vector<int>& y,
                                 int iterations, double step) {
  if (iterations < 1) throw ValueError("pgd_unbounded: iterations must be >= 1");
  if (step <= 0.0) throw ValueError("pgd_unbounded: step must be > 0");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> cur = x.data();
  std::vector<double> kept = x.data();
  std::vector<bool> done(n, false);
  for (int it = 0; it < iterations; ++it) {
    const Tensor xt = Tensor::from_data({n, d}, cur);
    const Tensor g = input_gradient(m, xt, y);
    // Growing step breaks oscillation inside loss folds of masked models.
    const double s = step * (1.0 + static_cast<double>(it) / 20.0);
    for (std::size_t i = 0; i < n * d; ++i) cur[i] = clamp01(cur[i] + s * sgn(g.data()[i]));
    const std::vector<int> pred = predict(m, Tensor::from_data({n, d}, cur));
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i] && pred[i] != y[i]) {
        done[i] = true;  // keep the first misclassified iterate
        for (std::size_t j = 0; j < d; ++j) kept[i * d + j] = cur[i * d + j];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!done[i])
      for (std::size_t j = 0; j < d; ++j) kept[i * d + j] = cur[i * d + j];
  }
  return finish_result(m, x, y, std::move(kept));
}

PerturbationResult random_sign(const Tensor& x, const std::vector<int>& y, double eps,
                               std::uint64_t seed, const Model* m) {
  if (eps < 0.0) throw ValueError("random_sign: epsilon must be >= 0");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> adv(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng(seed).fork(kRandomSignStream, i);
    for (std::size_t j = 0; j < d; ++j)
      adv[i * d + j] = clamp01(x.at2(i, j) + eps * rng.sign());
  }
  if (m != nullptr) return finish_result(*m, x, y, std::move(adv));
  PerturbationResult r;
  std::vector<double> delta(n * d);
  for (std::size_t i = 0; i < n * d; ++i) delta[i] = adv[i] - x.data()[i];
  r.x_adv = Tensor::from_data({n, d}, std::move(adv));
  r.delta = Tensor::from_data({n, d}, std::move(delta));
  r.success.assign(n, false);
  r.loss_achieved.assign(n, 0.0);
  return r;
}

PerturbationResult spsa(const Model& m, const Tensor& x, const std::vector<int>& y,
                        const AttackSpec& spec) {
  spec.validate();
  if (spec.epsilon < 0.0) throw ValueError("spsa: epsilon must be >= 0");
  const std::size_t n = x.dim(0), d = x.dim(1);
  const double eps = spec.epsilon;
  const double sigma = spec.spsa_sigma;
  const double step = eps / static_cast<double>(spec.iterations);
  const int pairs = spec.spsa_samples / 2;
  const auto& xv = x.data();

  // Black-box adapter: the estimator sees loss evaluations only, never the tape.
  const auto loss_eval = [&](const std::vector<double>& pts) {
    return per_example_loss(m, Tensor::from_data({n, d}, pts), y);
  };

  std::vector<double> cur(xv);
  std::vector<double> ghat(n * d), deltas(n * d), plus(n * d), minus(n * d);
  for (int it = 0; it < spec.iterations; ++it) {
    std::fill(ghat.begin(), ghat.end(), 0.0);
    for (int s = 0; s < pairs; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng(spec.seed).fork(
            kSpsaStream, (static_cast<std::uint64_t>(it) << 40) |
                             (static_cast<std::uint64_t>(s) << 20) | i);
        for (std::size_t j = 0; j < d; ++j) deltas[i * d + j] = rng.sign();
      }
      for (std::size_t i = 0; i < n * d; ++i) {
        plus[i] = cur[i] + sigma * deltas[i];
        minus[i] = cur[i] - sigma * deltas[i];
      }
      const std::vector<double> lp = loss_eval(plus);
      const std::vector<double> lm = loss_eval(minus);
      for (std::size_t i = 0; i < n; ++i) {
        const double fd = (lp[i] - lm[i]) / (2.0 * sigma);
        for (std::size_t j = 0; j < d; ++j) ghat[i * d + j] += fd * deltas[i * d + j];
      }
    }
    for (std::size_t i = 0; i < n * d; ++i) {
      double v = cur[i] + step * sgn(ghat[i] / pairs);
      v = std::min(xv[i] + eps, std::max(xv[i] - eps, v));
      cur[i] = clamp01(v);
    }
  }
  return finish_result(m, x, y, std::move(cur));
}

PerturbationResult deepfool(const Model& m, const Tensor& x, const std::vector<int>& y,
                            int max_iter, double overshoot) {
  if (max_iter < 1) throw ValueError("deepfool: max_iter must be >= 1");
  if (m.spec.num_classes < 2) throw ValueError("deepfool needs at least 2 classes");
  const std::size_t n = x.dim(0), d = x.dim(1);
  const std::size_t c = m.spec.num_classes;
  const auto& xv = x.data();

  std::vector<double> total_delta(n * d, 0.0);  // accumulated r, before overshoot
  std::vector<bool> converged(n, false);
  const std::vector<int> orig = predict(m, x);

  for (std::size_t ex = 0; ex < n; ++ex) {
    std::vector<double> xi(xv.begin() + ex * d, xv.begin() + (ex + 1) * d);
    std::vector<double> acc(d, 0.0);
    const int k0 = orig[ex];
    for (int it = 0; it < max_iter; ++it) {
      // Check the overshot point, as the original method does.
      std::vector<double> probe(d);
      for (std::size_t j = 0; j < d; ++j) probe[j] = xi[j] + (1.0 + overshoot) * acc[j];
      const Tensor pt = Tensor::from_data({1, d}, probe);
      if (predict(m, pt)[0] != k0) {
        converged[ex] = true;
        break;
      }
      // Linearize at the current (un-overshot) iterate.
      std::vector<double> curp(d);
      for (std::size_t j = 0; j < d; ++j) curp[j] = xi[j] + acc[j];
      const Tensor cur = Tensor::from_data({1, d}, curp);
      const Tensor lv = logits(m, cur);
      std::vector<std::vector<double>> grads(c);
      for (std::size_t cls = 0; cls < c; ++cls) {
        grads[cls] = logit_gradient(m, cur, {static_cast<int>(cls)}).data();
      }
      double best_dist = 0.0;
      std::size_t best_cls = c;
      double best_f = 0.0, best_w2 = 0.0;
      for (std::size_t cls = 0; cls < c; ++cls) {
        if (static_cast<int>(cls) == k0) continue;
        const double f = lv.at2(0, cls) - lv.at2(0, static_cast<std::size_t>(k0));
        double w2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double w = grads[cls][j] - grads[static_cast<std::size_t>(k0)][j];
          w2 += w * w;
        }
        if (w2 < 1e-24) continue;  // parallel logits: this boundary is unreachable
        const double dist = std::abs(f) / std::sqrt(w2);
        if (best_cls == c || dist < best_dist) {
          best_dist = dist;
          best_cls = cls;
          best_f = f;
          best_w2 = w2;
        }
      }
      if (best_cls == c) break;  // all gradients vanished; report non-convergence
      const double scale = std::abs(best_f) / best_w2;
      for (std::size_t j = 0; j < d; ++j) {
        const double w = grads[best_cls][j] - grads[static_cast<std::size_t>(k0)][j];
        acc[j] += scale * w;
      }
    }
    if (!converged[ex]) {
      // Final label check after the last step.
      std::vector<double> probe(d);
      for (std::size_t j = 0; j < d; ++j) probe[j] = xi[j] + (1.0 + overshoot) * acc[j];
      if (predict(m, Tensor::from_data({1, d}, probe))[0] != k0) converged[ex] = true;
    }
    for (std::size_t j = 0; j < d; ++j) total_delta[ex * d + j] = (1.0 + overshoot) * acc[j];
  }

  PerturbationResult r;
  std::vector<double> adv(n * d);
  for (std::size_t i = 0; i < n * d; ++i) adv[i] = xv[i] + total_delta[i];
  r.delta = Tensor::from_data({n, d}, std::move(total_delta));
  r.x_adv = Tensor::from_data({n, d}, adv);  // deepfool point; may leave [0,1] by the overshoot
  const Tensor lv = logits(m, r.x_adv);
  const std::vector<int> pred = predict_logits(lv);
  r.success.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.success[i] = pred[i] != y[i];
  r.loss_achieved = softmax_cross_entropy(lv, y).data();
  r.converged = std::move(converged);
  return r;
}

PerturbationResult run_attack(const Model& m, const Tensor& x, const std::vector<int>& y,
                              const AttackSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case AttackKind::kFgsm: return fgsm(m, x, y, spec.epsilon);
    case AttackKind::kStepLl: return step_ll(m, x, y, spec.epsilon);
    case AttackKind::kPgd: return pgd(m, x, y, spec);
    case AttackKind::kPgdUnbounded:
      return pgd_unbounded(m, x, y, spec.iterations, spec.unbounded_step);
    case AttackKind::kRandomSign: return random_sign(x, y, spec.epsilon, spec.seed, &m);
    case AttackKind::kSpsa: return spsa(m, x, y, spec);
    case AttackKind::kDeepFool: return deepfool(m, x, y, spec.deepfool_max_iter,
                                                spec.deepfool_overshoot);
  }
  throw ValueError("unhandled attack kind");
}

// ---- replay artifact ---------------------------------------------------

namespace {

std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void save_perturbation(const PerturbationResult& r, const std::string& path) {
  const std::size_t n = r.delta.dim(0), d = r.delta.dim(1);
  nlohmann::json header;
  header["format_version"] = kPerturbationFormatVersion;
  header["n"] = n;
  header["d"] = d;
  header["success"] = r.success;
  header["loss_achieved"] = r.loss_achieved;
  if (!r.converged.empty()) header["converged"] = r.converged;
  const std::string hs = header.dump();

  std::string blob;
  blob.append("GMPR", 4);
  std::uint32_t v32 = static_cast<std::uint32_t>(kPerturbationFormatVersion);
  std::uint32_t h32 = static_cast<std::uint32_t>(hs.size());
  blob.append(reinterpret_cast<const char*>(&v32), 4);
  blob.append(reinterpret_cast<const char*>(&h32), 4);
  blob.append(hs);
  blob.append(reinterpret_cast<const char*>(r.delta.data().data()), n * d * 8);
  blob.append(reinterpret_cast<const char*>(r.x_adv.data().data()), n * d * 8);
  const std::uint64_t sum = fnv1a(reinterpret_cast<const unsigned char*>(blob.data()), blob.size());
  blob.append(reinterpret_cast<const char*>(&sum), 8);

  const std::string tmp = path + ".tmp";
  std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + tmp + "' for writing");
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw IoError("write failed for '" + tmp + "'");
  f.close();
  std::filesystem::rename(tmp, path);
}

PerturbationResult load_perturbation(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open perturbation file '" + path + "'");
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (blob.size() < 20 || blob.compare(0, 4, "GMPR") != 0)
    throw IoError("'" + path + "' is not a perturbation file");
  std::uint64_t stored = 0;
  std::memcpy(&stored, blob.data() + blob.size() - 8, 8);
  if (stored != fnv1a(reinterpret_cast<const unsigned char*>(blob.data()), blob.size() - 8))
    throw IoError("perturbation file '" + path + "' failed checksum verification");
  std::uint32_t version = 0, hlen = 0;
  std::memcpy(&version, blob.data() + 4, 4);
  std::memcpy(&hlen, blob.data() + 8, 4);
  if (version != static_cast<std::uint32_t>(kPerturbationFormatVersion))
    throw IoError("perturbation file format version " + std::to_string(version) +
                  " is not supported");
  nlohmann::json header = nlohmann::json::parse(blob.substr(12, hlen));
  const std::size_t n = header.at("n").get<std::size_t>();
  const std::size_t d = header.at("d").get<std::size_t>();
  PerturbationResult r;
  r.success = header.at("success").get<std::vector<bool>>();
  r.loss_achieved = header.at("loss_achieved").get<std::vector<double>>();
  if (header.contains("converged")) r.converged = header.at("converged").get<std::vector<bool>>();
  std::vector<double> delta(n * d), adv(n * d);
  std::size_t off = 12 + hlen;
  if (off + 2 * n * d * 8 + 8 != blob.size()) throw IoError("perturbation file size mismatch");
  std::memcpy(delta.data(), blob.data() + off, n * d * 8);
  std::memcpy(adv.data(), blob.data() + off + n * d * 8, n * d * 8);
  r.delta = Tensor::from_data({n, d}, std::move(delta));
  r.x_adv = Tensor::from_data({n, d}, std::move(adv));
  return r;
}

}  // namespace gradmask
