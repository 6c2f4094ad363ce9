#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace gradmask {

using Shape = std::vector<std::size_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class ValueError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using GradMap = std::unordered_map<const Node*, std::vector<double>>;

/// One recorded tape entry. Nodes are immutable after construction; a node's
/// id is its creation order, so every operand of a node has a smaller id and
/// descending-id traversal is a valid reverse topological order.
struct Node {
  Shape shape;
  std::shared_ptr<const std::vector<double>> data;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<NodePtr> parents;
  // Accumulates d(out)/d(parent) into the grad map, given this node's cotangent.
  std::function<void(const std::vector<double>& out_grad, GradMap&)> backward;
};

}  // namespace detail

/// Dense row-major tensor of doubles. A Tensor is a cheap shared handle to an
/// immutable tape node; operations on tensors with requires_grad record
/// backward rules, everything else evaluates tape-free.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v);
  /// Wrap an existing buffer without copying. The buffer must stay unmodified
  /// for as long as any graph built from this leaf is alive.
  static Tensor wrap(Shape shape, std::shared_ptr<const std::vector<double>> data,
                     bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data->size(); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  const std::vector<double>& data() const { return *node_->data; }
  bool requires_grad() const { return node_->requires_grad; }

  /// Value of a 1-element tensor.
  double value() const;
  double at(std::size_t i) const { return (*node_->data)[i]; }
  double at2(std::size_t r, std::size_t c) const {
    return (*node_->data)[r * node_->shape[1] + c];
  }

  const detail::NodePtr& node() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}
  detail::NodePtr node_;
  friend Tensor make_tensor(detail::NodePtr);
};

Tensor make_tensor(detail::NodePtr n);

// ---- primitives --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);          // [n,k]x[k,m] -> [n,m]
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor bias_add(const Tensor& x, const Tensor& b);        // [n,m] + [m] broadcast over rows
Tensor relu(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor sum(const Tensor& a);                              // -> scalar
Tensor mean(const Tensor& a);                             // -> scalar

/// Per-example cross entropy of logits [n,c] against integer labels, computed
/// with a log-sum-exp that is exact for confidently-correct rows. Returns [n].
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Scalar sum_i x[i, idx[i]]. Backward scatters into the selected entries, so
/// the input gradient rows are per-example selected-logit gradients.
Tensor gather_sum(const Tensor& x, const std::vector<int>& idx);

/// Scalar sum_i w[i] * x[i, col]. Used by the Jacobian-regularizer surrogate.
Tensor weighted_column_sum(const Tensor& x, std::size_t col, const std::vector<double>& w);

/// 3x3 valid convolution over single-channel [n, h*w] inputs; kernel [k,3,3]
/// stored as [k, 9], bias [k]. Output [n, k*(h-2)*(w-2)].
Tensor conv2d3x3(const Tensor& x, std::size_t h, std::size_t w, const Tensor& kernel,
                 const Tensor& bias);

/// 2x2/stride-2 average pooling of [n, k*h*w] feature maps (h, w even halves
/// floored). Output [n, k*(h/2)*(w/2)].
Tensor avgpool2x2(const Tensor& x, std::size_t k, std::size_t h, std::size_t w);

// ---- autodiff ----------------------------------------------------------

/// Result of one backward pass. Holds gradient buffers for every
/// requires-grad node reached from the scalar output.
class Gradients {
 public:
  bool contains(const Tensor& t) const;
  /// Gradient of the backward root w.r.t. t, shaped like t. Zero tensor if t
  /// required grad but received no cotangent.
  Tensor grad_of(const Tensor& t) const;

 private:
  detail::GradMap grads_;
  friend Gradients backward(const Tensor&);
};

/// Reverse-mode pass from a 1-element output. The tape is left unmodified;
/// repeated calls produce identical results.
Gradients backward(const Tensor& scalar_out);

/// Gradient of scalar_out w.r.t. one leaf. Throws if leaf is not on the tape
/// of scalar_out.
Tensor backward_grad(const Tensor& scalar_out, const Tensor& leaf);

/// f maps a tensor to a 1-element tensor.
using ScalarFn = std::function<Tensor(const Tensor&)>;

/// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-12).
/// The analytic side runs backward_grad on f at a requires-grad copy of x; the
/// numeric side re-evaluates f at x +- step*e_i with grad disabled.
double finite_difference_check(const ScalarFn& f, const Tensor& x, double step);

/// Central-difference gradient of f at x, no tape involved.
std::vector<double> finite_difference_gradient(const ScalarFn& f, const Tensor& x, double step);

}  // namespace gradmask
