#include "gradmask/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "gradmask/rng.hpp"
#include "gradmask/version.hpp"
#include "json.hpp"

namespace gradmask {

namespace {

std::size_t isqrt(std::size_t n) {
  std::size_t r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

Tensor activate(const Tensor& t, Activation a) {
  return a == Activation::kRelu ? relu(t) : tanh_op(t);
}

// FNV-1a, used for the model file checksum.
std::uint64_t fnv1a(const unsigned char* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string to_string(Arch a) { return a == Arch::kMlp ? "mlp" : "tinyconv"; }
std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

Arch arch_from_string(const std::string& s) {
  if (s == "mlp") return Arch::kMlp;
  if (s == "tinyconv") return Arch::kTinyConv;
  throw ValueError("unknown architecture '" + s + "' (expected mlp or tinyconv)");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ValueError("unknown activation '" + s + "' (expected relu or tanh)");
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw ValueError("model spec: input_dim must be positive");
  if (num_classes < 2) throw ValueError("model spec: num_classes must be at least 2");
  if (widths.empty()) throw ValueError("model spec: widths must be nonempty");
  for (auto w : widths)
    if (w == 0) throw ValueError("model spec: widths must be positive");
  if (arch == Arch::kTinyConv) {
    const std::size_t side = isqrt(input_dim);
    if (side * side != input_dim || side < 3) {
      throw ValueError("tinyconv input_dim must be a perfect square >= 9, got " +
                       std::to_string(input_dim));
    }
  }
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value->size();
  return n;
}

Model Model::clone() const {
  Model m;
  m.spec = spec;
  m.provenance = provenance;
  m.params.reserve(params.size());
  for (const auto& p : params) {
    m.params.push_back({p.name, p.shape, std::make_shared<std::vector<double>>(*p.value)});
  }
  return m;
}

namespace {

Param make_param(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  auto buf = std::make_shared<std::vector<double>>(shape_numel(shape));
  for (double& v : *buf) v = rng.uniform(-limit, limit);
  return {name, std::move(shape), std::move(buf)};
}

Param make_zero_param(const std::string& name, Shape shape) {
  return {name, shape, std::make_shared<std::vector<double>>(shape_numel(shape), 0.0)};
}

}  // namespace

Model init_model(const ModelSpec& spec) {
  spec.validate();
  Model m;
  m.spec = spec;
  Rng rng = Rng(spec.seed).fork(0x6d6f64656cULL);  // model-init stream
  if (spec.arch == Arch::kMlp) {
    std::size_t in = spec.input_dim;
    for (std::size_t i = 0; i < spec.widths.size(); ++i) {
      const std::size_t out = spec.widths[i];
      m.params.push_back(make_param("w" + std::to_string(i), {in, out}, in, rng));
      m.params.push_back(make_zero_param("b" + std::to_string(i), {out}));
      in = out;
    }
    m.params.push_back(make_param("w_out", {in, spec.num_classes}, in, rng));
    m.params.push_back(make_zero_param("b_out", {spec.num_classes}));
  } else {
    const std::size_t channels = spec.widths[0];
    m.params.push_back(make_param("conv_k", {channels, 9}, 9, rng));
    m.params.push_back(make_zero_param("conv_b", {channels}));
    const std::size_t side = isqrt(spec.input_dim);
    const std::size_t oh = side - 2, ow = side - 2;
    const std::size_t ph = oh / 2 > 0 ? oh / 2 : 1, pw = ow / 2 > 0 ? ow / 2 : 1;
    std::size_t flat = channels * (oh >= 2 ? ph : oh) * (ow >= 2 ? pw : ow);
    m.params.push_back(make_param("w_out", {flat, spec.num_classes}, flat, rng));
    m.params.push_back(make_zero_param("b_out", {spec.num_classes}));
  }
  return m;
}

Tensor logits(const Model& m, const Tensor& x, std::vector<Tensor>* param_leaves) {
  if (x.ndim() != 2 || x.dim(1) != m.spec.input_dim) {
    throw ShapeError("model input " + shape_str(x.shape()) + " does not match input_dim " +
                     std::to_string(m.spec.input_dim));
  }
  const bool train = param_leaves != nullptr;
  std::vector<Tensor> leaves;
  leaves.reserve(m.params.size());
  for (const auto& p : m.params) {
    leaves.push_back(Tensor::wrap(p.shape, p.value, /*requires_grad=*/train));
  }
  if (train) *param_leaves = leaves;

  Tensor h = x;
  if (m.spec.arch == Arch::kMlp) {
    std::size_t li = 0;
    for (std::size_t i = 0; i < m.spec.widths.size(); ++i) {
      h = activate(bias_add(matmul(h, leaves[li]), leaves[li + 1]), m.spec.activation);
      li += 2;
    }
    return bias_add(matmul(h, leaves[li]), leaves[li + 1]);
  }
  const std::size_t side = isqrt(m.spec.input_dim);
  const std::size_t channels = m.spec.widths[0];
  Tensor c = conv2d3x3(h, side, side, leaves[0], leaves[1]);
  c = activate(c, m.spec.activation);
  const std::size_t oh = side - 2, ow = side - 2;
  if (oh >= 2 && ow >= 2) c = avgpool2x2(c, channels, oh, ow);
  return bias_add(matmul(c, leaves[2]), leaves[3]);
}

std::vector<int> predict_logits(const Tensor& lv) {
  const std::size_t n = lv.dim(0), c = lv.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (lv.at2(i, j) > lv.at2(i, arg)) arg = j;  // strict: ties keep the lowest index
    out[i] = static_cast<int>(arg);
  }
  return out;
}

std::vector<int> predict(const Model& m, const Tensor& x) {
  return predict_logits(logits(m, x));
}

Tensor loss(const Model& m, const Tensor& x, const std::vector<int>& y,
            std::vector<Tensor>* param_leaves) {
  return mean(softmax_cross_entropy(logits(m, x, param_leaves), y));
}

std::vector<double> per_example_loss(const Model& m, const Tensor& x, const std::vector<int>& y) {
  Tensor xin = Tensor::from_data(x.shape(), x.data());  // grad disabled
  return softmax_cross_entropy(logits(m, xin), y).data();
}

Tensor input_gradient(const Model& m, const Tensor& x, const std::vector<int>& y) {
  Tensor xg = Tensor::from_data(x.shape(), x.data(), /*requires_grad=*/true);
  // Example i's loss depends only on row i, so the gradient of the sum has
  // row i equal to the per-example input gradient.
  Tensor total = sum(softmax_cross_entropy(logits(m, xg), y));
  return backward_grad(total, xg);
}

Tensor logit_gradient(const Model& m, const Tensor& x, const std::vector<int>& classes) {
  Tensor xg = Tensor::from_data(x.shape(), x.data(), /*requires_grad=*/true);
  Tensor total = gather_sum(logits(m, xg), classes);
  return backward_grad(total, xg);
}

std::vector<double> softmax_rows(const Tensor& lv) {
  const std::size_t n = lv.dim(0), c = lv.dim(1);
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = lv.at2(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lv.at2(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(lv.at2(i, j) - mx);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = std::exp(lv.at2(i, j) - mx) / z;
  }
  return out;
}

// ---- persistence -------------------------------------------------------
//
// Layout: magic "GMDL" | u32 format version | u32 header length | header JSON
// | raw little-endian doubles per param in order | u64 FNV-1a checksum over
// everything before it.

namespace {

void append_u32(std::string& s, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}

void append_u64(std::string& s, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  s.append(b, 8);
}

nlohmann::json spec_to_json(const ModelSpec& s) {
  return {{"arch", to_string(s.arch)},          {"widths", s.widths},
          {"activation", to_string(s.activation)}, {"input_dim", s.input_dim},
          {"num_classes", s.num_classes},       {"seed", s.seed}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.arch = arch_from_string(j.at("arch").get<std::string>());
  s.widths = j.at("widths").get<std::vector<std::size_t>>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.num_classes = j.at("num_classes").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void save_model(const Model& m, const std::string& path) {
  nlohmann::json header;
  header["format_version"] = kModelFormatVersion;
  header["spec"] = spec_to_json(m.spec);
  header["provenance"] = m.provenance;
  auto params = nlohmann::json::array();
  for (const auto& p : m.params) params.push_back({{"name", p.name}, {"shape", p.shape}});
  header["params"] = params;
  const std::string hs = header.dump();

  std::string blob;
  blob.reserve(64 + hs.size() + m.param_count() * 8);
  blob.append("GMDL", 4);
  append_u32(blob, static_cast<std::uint32_t>(kModelFormatVersion));
  append_u32(blob, static_cast<std::uint32_t>(hs.size()));
  blob.append(hs);
  for (const auto& p : m.params) {
    const char* raw = reinterpret_cast<const char*>(p.value->data());
    blob.append(raw, p.value->size() * 8);
  }
  append_u64(blob, fnv1a(reinterpret_cast<const unsigned char*>(blob.data()), blob.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw IoError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Model load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open model file '" + path + "'");
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (blob.size() < 24 || blob.compare(0, 4, "GMDL") != 0) {
    throw IoError("'" + path + "' is not a model file");
  }
  const std::size_t body = blob.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, blob.data() + body, 8);
  const std::uint64_t actual = fnv1a(reinterpret_cast<const unsigned char*>(blob.data()), body);
  if (stored != actual) {
    throw IoError("model file '" + path + "' failed checksum verification");
  }
  std::uint32_t version = 0, hlen = 0;
  std::memcpy(&version, blob.data() + 4, 4);
  std::memcpy(&hlen, blob.data() + 8, 4);
  if (version != static_cast<std::uint32_t>(kModelFormatVersion)) {
    throw IoError("model file format version " + std::to_string(version) +
                  " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  if (12 + hlen > body) throw IoError("model file '" + path + "' is truncated");
  nlohmann::json header = nlohmann::json::parse(blob.substr(12, hlen));

  Model m;
  m.spec = spec_from_json(header.at("spec"));
  m.provenance = header.at("provenance").get<std::string>();
  std::size_t off = 12 + hlen;
  for (const auto& pj : header.at("params")) {
    Param p;
    p.name = pj.at("name").get<std::string>();
    p.shape = pj.at("shape").get<Shape>();
    const std::size_t count = shape_numel(p.shape);
    if (off + count * 8 > body) throw IoError("model file '" + path + "' is truncated");
    p.value = std::make_shared<std::vector<double>>(count);
    std::memcpy(p.value->data(), blob.data() + off, count * 8);
    off += count * 8;
    m.params.push_back(std::move(p));
  }
  if (off != body) throw IoError("model file '" + path + "' has trailing data");
  for (const auto& p : m.params)
    for (double v : *p.value)
      if (!std::isfinite(v)) throw IoError("model file '" + path + "' holds non-finite parameters");
  return m;
}

}  // namespace gradmask
