#include "gradmask/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace gradmask {

namespace {

std::atomic<std::uint64_t> g_node_counter{1};

std::uint64_t next_id() { return g_node_counter.fetch_add(1, std::memory_order_relaxed); }

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw ValueError(std::string("non-finite value produced by ") + op);
    }
  }
}

detail::NodePtr new_node(Shape shape, std::vector<double> data, const char* op) {
  check_finite(data, op);
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::make_shared<const std::vector<double>>(std::move(data));
  n->id = next_id();
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

std::vector<double>& grad_buf(detail::GradMap& m, const detail::Node* n) {
  auto it = m.find(n);
  if (it == m.end()) {
    it = m.emplace(n, std::vector<double>(n->data->size(), 0.0)).first;
  }
  return it->second;
}

// Wires up a result node: parents and backward are recorded only when some
// operand requires grad, so evaluation without grad never touches the tape.
Tensor finish(detail::NodePtr n, std::vector<detail::NodePtr> parents,
              std::function<void(const std::vector<double>&, detail::GradMap&)> backward) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return make_tensor(std::move(n));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Tensor make_tensor(detail::NodePtr n) { return Tensor(std::move(n)); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto n = new_node(std::move(shape), std::move(data), "tensor construction");
  n->requires_grad = requires_grad;
  return make_tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::vector<double> d(shape_numel(shape), v);
  return from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

Tensor Tensor::wrap(Shape shape, std::shared_ptr<const std::vector<double>> data,
                    bool requires_grad) {
  if (shape_numel(shape) != data->size()) {
    throw ShapeError("wrapped buffer length does not match shape " + shape_str(shape));
  }
  check_finite(*data, "tensor wrap");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  n->id = next_id();
  return make_tensor(std::move(n));
}

double Tensor::value() const {
  if (size() != 1) {
    throw ShapeError("value() requires a 1-element tensor, got shape " + shape_str(shape()));
  }
  return (*node_->data)[0];
}

// ---- primitives --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aik = av[i * k + p];
      const double* brow = bv.data() + p * m;
      double* orow = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
  auto node = new_node({n, m}, std::move(out), "matmul");
  auto an = a.node(), bn = b.node();
  return finish(
      node, {an, bn},
      [an, bn, n, k, m](const std::vector<double>& g, detail::GradMap& gm) {
        if (an->requires_grad) {
          auto& ga = grad_buf(gm, an.get());
          const auto& bv = *bn->data;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const double gij = g[i * m + j];
              for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[p * m + j];
            }
        }
        if (bn->requires_grad) {
          auto& gb = grad_buf(gm, bn.get());
          const auto& av = *an->data;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av[i * k + p];
              for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * g[i * m + j];
            }
        }
      });
}

namespace {

template <class Fwd, class Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  auto node = new_node(a.shape(), std::move(out), name);
  auto an = a.node(), bn = b.node();
  return finish(node, {an, bn},
                [an, bn, bwd](const std::vector<double>& g, detail::GradMap& gm) {
                  const auto& av = *an->data;
                  const auto& bv = *bn->data;
                  std::vector<double>* ga = an->requires_grad ? &grad_buf(gm, an.get()) : nullptr;
                  std::vector<double>* gb = bn->requires_grad ? &grad_buf(gm, bn.get()) : nullptr;
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    double da, db;
                    bwd(av[i], bv[i], da, db);
                    if (ga) (*ga)[i] += g[i] * da;
                    if (gb) (*gb)[i] += g[i] * db;
                  }
                });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double& da, double& db) { da = 1.0; db = 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double& da, double& db) { da = 1.0; db = -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double& da, double& db) { da = y; db = x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double& da, double& db) {
        da = 1.0 / y;
        db = -x / (y * y);
      });
}

namespace {

template <class Fwd, class Bwd>
Tensor unary_elementwise(const Tensor& a, const char* name, Fwd fwd, Bwd bwd) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto node = new_node(a.shape(), std::move(out), name);
  auto an = a.node();
  auto on = node;  // backward of tanh reads the forward output
  return finish(node, {an},
                [an, on, bwd](const std::vector<double>& g, detail::GradMap& gm) {
                  auto& ga = grad_buf(gm, an.get());
                  const auto& av = *an->data;
                  const auto& ov = *on->data;
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bwd(av[i], ov[i]);
                });
}

}  // namespace

Tensor add_scalar(const Tensor& a, double s) {
  return unary_elementwise(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_elementwise(
      a, "mul_scalar", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh_op(const Tensor& a) {
  return unary_elementwise(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || x.dim(1) != b.dim(0)) {
    throw ShapeError("bias_add shape mismatch: " + shape_str(x.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = x.dim(0), m = x.dim(1);
  const auto& xv = x.data();
  const auto& bv = b.data();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = xv[i * m + j] + bv[j];
  auto node = new_node({n, m}, std::move(out), "bias_add");
  auto xn = x.node(), bn = b.node();
  return finish(node, {xn, bn},
                [xn, bn, n, m](const std::vector<double>& g, detail::GradMap& gm) {
                  if (xn->requires_grad) {
                    auto& gx = grad_buf(gm, xn.get());
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                  }
                  if (bn->requires_grad) {
                    auto& gb = grad_buf(gm, bn.get());
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
                  }
                });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  auto node = new_node({1}, {s}, "sum");
  auto an = a.node();
  return finish(node, {an}, [an](const std::vector<double>& g, detail::GradMap& gm) {
    auto& ga = grad_buf(gm, an.get());
    for (double& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double x : a.data()) s += x;
  auto node = new_node({1}, {s * inv}, "mean");
  auto an = a.node();
  return finish(node, {an}, [an, inv](const std::vector<double>& g, detail::GradMap& gm) {
    auto& ga = grad_buf(gm, an.get());
    const double gi = g[0] * inv;
    for (double& v : ga) v += gi;
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2) {
    throw ShapeError("softmax_cross_entropy expects [n,c] logits, got " +
                     shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy label count " + std::to_string(labels.size()) +
                     " does not match batch size " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ValueError("label " + std::to_string(labels[i]) + " out of range [0," +
                       std::to_string(c) + ") at row " + std::to_string(i));
    }
  }
  const auto& lv = logits.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = lv.data() + i * c;
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[arg]) arg = j;
    const double m = row[arg];
    double rest = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (j != arg) rest += std::exp(row[j] - m);
    // log-sum-exp = m + log1p(rest); exact for confident rows where rest ~ 0
    out[i] = (m - row[labels[i]]) + std::log1p(rest);
  }
  auto node = new_node({n}, std::move(out), "softmax_cross_entropy");
  auto ln = logits.node();
  auto labels_copy = labels;
  return finish(node, {ln},
                [ln, labels_copy, n, c](const std::vector<double>& g, detail::GradMap& gm) {
                  auto& gl = grad_buf(gm, ln.get());
                  const auto& lv = *ln->data;
                  for (std::size_t i = 0; i < n; ++i) {
                    const double* row = lv.data() + i * c;
                    double m = row[0];
                    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
                    double z = 0.0;
                    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
                    const double gi = g[i];
                    for (std::size_t j = 0; j < c; ++j) {
                      double p = std::exp(row[j] - m) / z;
                      gl[i * c + j] +=
                          gi * (p - (static_cast<std::size_t>(labels_copy[i]) == static_cast<std::size_t>(j) ? 1.0 : 0.0));
                    }
                  }
                });
}

Tensor gather_sum(const Tensor& x, const std::vector<int>& idx) {
  if (x.ndim() != 2 || idx.size() != x.dim(0)) {
    throw ShapeError("gather_sum expects [n,c] with n indices, got " + shape_str(x.shape()) +
                     " and " + std::to_string(idx.size()) + " indices");
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= c)
      throw ValueError("gather_sum index out of range at row " + std::to_string(i));
  }
  const auto& xv = x.data();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += xv[i * c + idx[i]];
  auto node = new_node({1}, {s}, "gather_sum");
  auto xn = x.node();
  auto idx_copy = idx;
  return finish(node, {xn}, [xn, idx_copy, c](const std::vector<double>& g, detail::GradMap& gm) {
    auto& gx = grad_buf(gm, xn.get());
    for (std::size_t i = 0; i < idx_copy.size(); ++i) gx[i * c + idx_copy[i]] += g[0];
  });
}

Tensor weighted_column_sum(const Tensor& x, std::size_t col, const std::vector<double>& w) {
  if (x.ndim() != 2 || col >= x.dim(1) || w.size() != x.dim(0)) {
    throw ShapeError("weighted_column_sum shape mismatch for " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  const auto& xv = x.data();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * xv[i * c + col];
  auto node = new_node({1}, {s}, "weighted_column_sum");
  auto xn = x.node();
  auto wc = w;
  return finish(node, {xn}, [xn, wc, col, c](const std::vector<double>& g, detail::GradMap& gm) {
    auto& gx = grad_buf(gm, xn.get());
    for (std::size_t i = 0; i < wc.size(); ++i) gx[i * c + col] += g[0] * wc[i];
  });
}

Tensor conv2d3x3(const Tensor& x, std::size_t h, std::size_t w, const Tensor& kernel,
                 const Tensor& bias) {
  if (x.ndim() != 2 || x.dim(1) != h * w) {
    throw ShapeError("conv2d3x3 input " + shape_str(x.shape()) + " does not match " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  if (kernel.ndim() != 2 || kernel.dim(1) != 9 || bias.ndim() != 1 ||
      bias.dim(0) != kernel.dim(0)) {
    throw ShapeError("conv2d3x3 kernel must be [k,9] with bias [k], got " +
                     shape_str(kernel.shape()) + " / " + shape_str(bias.shape()));
  }
  if (h < 3 || w < 3) throw ShapeError("conv2d3x3 needs at least a 3x3 input");
  const std::size_t n = x.dim(0), k = kernel.dim(0);
  const std::size_t oh = h - 2, ow = w - 2;
  const auto& xv = x.data();
  const auto& kv = kernel.data();
  const auto& bv = bias.data();
  std::vector<double> out(n * k * oh * ow, 0.0);
  for (std::size_t im = 0; im < n; ++im) {
    const double* img = xv.data() + im * h * w;
    for (std::size_t f = 0; f < k; ++f) {
      const double* ker = kv.data() + f * 9;
      double* om = out.data() + (im * k + f) * oh * ow;
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double s = bv[f];
          for (std::size_t di = 0; di < 3; ++di)
            for (std::size_t dj = 0; dj < 3; ++dj)
              s += img[(i + di) * w + (j + dj)] * ker[di * 3 + dj];
          om[i * ow + j] = s;
        }
    }
  }
  auto node = new_node({n, k * oh * ow}, std::move(out), "conv2d3x3");
  auto xn = x.node(), kn = kernel.node(), bn = bias.node();
  return finish(node, {xn, kn, bn},
                [xn, kn, bn, n, k, h, w, oh, ow](const std::vector<double>& g,
                                                 detail::GradMap& gm) {
                  const auto& xv = *xn->data;
                  const auto& kv = *kn->data;
                  std::vector<double>* gx = xn->requires_grad ? &grad_buf(gm, xn.get()) : nullptr;
                  std::vector<double>* gk = kn->requires_grad ? &grad_buf(gm, kn.get()) : nullptr;
                  std::vector<double>* gb = bn->requires_grad ? &grad_buf(gm, bn.get()) : nullptr;
                  for (std::size_t im = 0; im < n; ++im) {
                    const double* img = xv.data() + im * h * w;
                    for (std::size_t f = 0; f < k; ++f) {
                      const double* ker = kv.data() + f * 9;
                      const double* gout = g.data() + (im * k + f) * oh * ow;
                      for (std::size_t i = 0; i < oh; ++i)
                        for (std::size_t j = 0; j < ow; ++j) {
                          const double go = gout[i * ow + j];
                          if (gb) (*gb)[f] += go;
                          for (std::size_t di = 0; di < 3; ++di)
                            for (std::size_t dj = 0; dj < 3; ++dj) {
                              if (gx) (*gx)[im * h * w + (i + di) * w + (j + dj)] += go * ker[di * 3 + dj];
                              if (gk) (*gk)[f * 9 + di * 3 + dj] += go * img[(i + di) * w + (j + dj)];
                            }
                        }
                    }
                  }
                });
}

Tensor avgpool2x2(const Tensor& x, std::size_t k, std::size_t h, std::size_t w) {
  if (x.ndim() != 2 || x.dim(1) != k * h * w) {
    throw ShapeError("avgpool2x2 input " + shape_str(x.shape()) + " does not match k*h*w");
  }
  const std::size_t n = x.dim(0), oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw ShapeError("avgpool2x2 needs h,w >= 2");
  const auto& xv = x.data();
  std::vector<double> out(n * k * oh * ow);
  for (std::size_t im = 0; im < n; ++im)
    for (std::size_t f = 0; f < k; ++f) {
      const double* fm = xv.data() + (im * k + f) * h * w;
      double* om = out.data() + (im * k + f) * oh * ow;
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
          om[i * ow + j] = 0.25 * (fm[2 * i * w + 2 * j] + fm[2 * i * w + 2 * j + 1] +
                                   fm[(2 * i + 1) * w + 2 * j] + fm[(2 * i + 1) * w + 2 * j + 1]);
    }
  auto node = new_node({n, k * oh * ow}, std::move(out), "avgpool2x2");
  auto xn = x.node();
  return finish(node, {xn},
                [xn, n, k, h, w, oh, ow](const std::vector<double>& g, detail::GradMap& gm) {
                  auto& gx = grad_buf(gm, xn.get());
                  for (std::size_t im = 0; im < n; ++im)
                    for (std::size_t f = 0; f < k; ++f) {
                      double* gfm = gx.data() + (im * k + f) * h * w;
                      const double* gom = g.data() + (im * k + f) * oh * ow;
                      for (std::size_t i = 0; i < oh; ++i)
                        for (std::size_t j = 0; j < ow; ++j) {
                          const double gv = 0.25 * gom[i * ow + j];
                          gfm[2 * i * w + 2 * j] += gv;
                          gfm[2 * i * w + 2 * j + 1] += gv;
                          gfm[(2 * i + 1) * w + 2 * j] += gv;
                          gfm[(2 * i + 1) * w + 2 * j + 1] += gv;
                        }
                    }
                });
}

// ---- autodiff ----------------------------------------------------------

bool Gradients::contains(const Tensor& t) const {
  return grads_.find(t.node().get()) != grads_.end();
}

Tensor Gradients::grad_of(const Tensor& t) const {
  auto it = grads_.find(t.node().get());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor::from_data(t.shape(), it->second);
}

Gradients backward(const Tensor& scalar_out) {
  if (scalar_out.size() != 1) {
    throw ShapeError("backward requires a scalar (1-element) output, got shape " +
                     shape_str(scalar_out.shape()));
  }
  // Collect requires-grad nodes reachable from the root.
  std::vector<const detail::Node*> order;
  {
    std::vector<const detail::Node*> stack{scalar_out.node().get()};
    std::unordered_map<const detail::Node*, bool> seen;
    while (!stack.empty()) {
      const detail::Node* n = stack.back();
      stack.pop_back();
      if (!n->requires_grad || seen[n]) continue;
      seen[n] = true;
      order.push_back(n);
      for (const auto& p : n->parents) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  Gradients result;
  if (!scalar_out.requires_grad()) return result;  // nothing on the tape
  result.grads_[scalar_out.node().get()] = {1.0};
  for (const detail::Node* n : order) {
    if (!n->backward) continue;
    auto it = result.grads_.find(n);
    if (it == result.grads_.end()) continue;  // no cotangent reached this node
    n->backward(it->second, result.grads_);
  }
  return result;
}

Tensor backward_grad(const Tensor& scalar_out, const Tensor& leaf) {
  if (!leaf.requires_grad()) {
    throw ValueError("leaf is not on the tape: it does not require grad");
  }
  Gradients g = backward(scalar_out);
  if (!g.contains(leaf)) {
    throw ValueError("leaf is not on the tape of the given output");
  }
  return g.grad_of(leaf);
}

std::vector<double> finite_difference_gradient(const ScalarFn& f, const Tensor& x, double step) {
  if (step <= 0.0) throw ValueError("finite difference step must be positive");
  std::vector<double> grad(x.size());
  std::vector<double> base = x.data();
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> hi = base, lo = base;
    hi[i] += step;
    lo[i] -= step;
    const double fhi = f(Tensor::from_data(x.shape(), hi)).value();
    const double flo = f(Tensor::from_data(x.shape(), lo)).value();
    if (!std::isfinite(fhi) || !std::isfinite(flo)) {
      throw ValueError("non-finite function value during finite differences");
    }
    grad[i] = (fhi - flo) / (2.0 * step);
  }
  return grad;
}

double finite_difference_check(const ScalarFn& f, const Tensor& x, double step) {
  Tensor xg = Tensor::from_data(x.shape(), x.data(), /*requires_grad=*/true);
  Tensor out = f(xg);
  Tensor analytic = out.requires_grad() ? backward_grad(out, xg) : Tensor::zeros(x.shape());
  std::vector<double> numeric = finite_difference_gradient(f, x, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic.at(i);
    const double err = std::abs(a - numeric[i]) / (std::abs(a) + 1e-12);
    // 0/0 counts as exact agreement
    if (a == 0.0 && numeric[i] == 0.0) continue;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace gradmask
