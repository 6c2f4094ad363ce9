#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gradmask/tensor.hpp"

namespace gradmask {

enum class Arch { kMlp, kTinyConv };
enum class Activation { kRelu, kTanh };

std::string to_string(Arch a);
std::string to_string(Activation a);
Arch arch_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

struct ModelSpec {
  Arch arch = Arch::kMlp;
  std::vector<std::size_t> widths = {64, 64};  // mlp: hidden widths; tinyconv: {channels}
  Activation activation = Activation::kRelu;
  std::size_t input_dim = 16;
  std::size_t num_classes = 3;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

struct Param {
  std::string name;
  Shape shape;
  std::shared_ptr<std::vector<double>> value;
};

/// A classifier: spec + named parameters + the tag of the training regime
/// that produced it. Immutable after training; concurrent read-only use is safe.
struct Model {
  ModelSpec spec;
  std::vector<Param> params;
  std::string provenance = "untrained";

  std::size_t param_count() const;
  Model clone() const;  // deep copy (training mutates a private copy)
};

/// Fresh model with He-style fan-in uniform init, deterministic per spec.seed.
Model init_model(const ModelSpec& spec);

/// Forward pass to raw logits [n, c]. When `param_leaves` is non-null the
/// parameters are wrapped as requires-grad leaves (for training) and the leaf
/// tensors are returned there in params order; otherwise parameters enter as
/// constants and only x's requires_grad matters.
Tensor logits(const Model& m, const Tensor& x, std::vector<Tensor>* param_leaves = nullptr);

/// Argmax prediction per row; ties break toward the lowest class index.
std::vector<int> predict(const Model& m, const Tensor& x);
std::vector<int> predict_logits(const Tensor& logit_values);

/// Mean cross-entropy over the batch, as a scalar tensor on the tape of x.
Tensor loss(const Model& m, const Tensor& x, const std::vector<int>& y,
            std::vector<Tensor>* param_leaves = nullptr);

/// Per-example cross-entropy values, tape-free.
std::vector<double> per_example_loss(const Model& m, const Tensor& x, const std::vector<int>& y);

/// Rows of d L(x_i, y_i) / d x_i (per-example loss, not batch-averaged).
Tensor input_gradient(const Model& m, const Tensor& x, const std::vector<int>& y);

/// Rows of d(l_{c_i}(x_i))/d x_i for per-example class choices c.
Tensor logit_gradient(const Model& m, const Tensor& x, const std::vector<int>& classes);

void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

/// Softmax of raw logit values (no tape), row-wise.
std::vector<double> softmax_rows(const Tensor& logit_values);

}  // namespace gradmask
