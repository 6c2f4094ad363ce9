#include "gradmask/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gradmask/rng.hpp"

namespace gradmask {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

constexpr std::uint64_t kCenterStream = 0x63656e74;   // center placement
constexpr std::uint64_t kSampleStream = 0x73616d70;   // per-split samples

}  // namespace

std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ValueError("unknown split '" + s + "' (expected train or test)");
}

LabeledDataset gen_blobs(std::size_t d, std::size_t c, std::size_t n_per_class, double spread,
                         std::uint64_t seed, Split split) {
  if (d < 2) throw ValueError("gen_blobs: d must be at least 2");
  if (c < 2) throw ValueError("gen_blobs: c must be at least 2");
  if (n_per_class == 0) throw ValueError("gen_blobs: n_per_class must be positive");
  if (spread < 0.0) throw ValueError("gen_blobs: spread must be non-negative");

  // Centers are part of the generator, shared by both splits.
  Rng crng = Rng(seed).fork(kCenterStream);
  std::vector<std::vector<double>> centers;
  centers.reserve(c);
  {
    std::vector<double> c0(d);
    for (auto& v : c0) v = crng.uniform(0.25, 0.75);
    centers.push_back(std::move(c0));
  }
  const double sep = 6.0 * spread;
  for (std::size_t k = 1; k < c; ++k) {
    std::vector<double> cand(d);
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::vector<double> dir(d);
      double norm = 0.0;
      for (auto& v : dir) {
        v = crng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      bool ok = true;
      for (std::size_t i = 0; i < d; ++i) {
        cand[i] = centers[k - 1][i] + sep * dir[i] / norm;
        if (cand[i] < 0.25 || cand[i] > 0.75) ok = false;
      }
      if (ok) break;
      // keep the last candidate clamped into the box if every attempt failed
      if (attempt == 99)
        for (auto& v : cand) v = std::min(0.75, std::max(0.25, v));
    }
    centers.push_back(cand);
  }

  Rng srng = Rng(seed).fork(kSampleStream, split == Split::kTrain ? 0 : 1);
  std::vector<double> xs(c * n_per_class * d);
  std::vector<int> ys(c * n_per_class);
  std::size_t row = 0;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      for (std::size_t j = 0; j < d; ++j) {
        xs[row * d + j] = clamp01(centers[k][j] + spread * srng.normal());
      }
      ys[row] = static_cast<int>(k);
    }
  }
  LabeledDataset ds;
  ds.x = Tensor::from_data({c * n_per_class, d}, std::move(xs));
  ds.y = std::move(ys);
  ds.classes = c;
  ds.split = split;
  std::ostringstream g;
  g << "blobs(d=" << d << ",c=" << c << ",n_per_class=" << n_per_class << ",spread=" << spread
    << ",seed=" << seed << ")";
  ds.generator = g.str();
  return ds;
}

LabeledDataset gen_rings(std::size_t d, std::size_t n_per_class, double noise,
                         std::uint64_t seed, Split split) {
  if (d < 2) throw ValueError("gen_rings: d must be at least 2");
  if (n_per_class == 0) throw ValueError("gen_rings: n_per_class must be positive");
  if (noise < 0.0) throw ValueError("gen_rings: noise must be non-negative");

  Rng srng = Rng(seed).fork(kSampleStream, split == Split::kTrain ? 0 : 1);
  const double radii[2] = {0.15, 0.35};
  const std::size_t n = 2 * n_per_class;
  std::vector<double> xs(n * d);
  std::vector<int> ys(n);
  std::size_t row = 0;
  for (int k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      const double theta = srng.uniform(0.0, 2.0 * 3.14159265358979323846);
      const double r = radii[k] + noise * srng.normal();
      xs[row * d + 0] = clamp01(0.5 + r * std::cos(theta));
      xs[row * d + 1] = clamp01(0.5 + r * std::sin(theta));
      for (std::size_t j = 2; j < d; ++j) xs[row * d + j] = srng.uniform(0.45, 0.55);
      ys[row] = k;
    }
  }
  LabeledDataset ds;
  ds.x = Tensor::from_data({n, d}, std::move(xs));
  ds.y = std::move(ys);
  ds.classes = 2;
  ds.split = split;
  std::ostringstream g;
  g << "rings(d=" << d << ",n_per_class=" << n_per_class << ",noise=" << noise
    << ",seed=" << seed << ")";
  ds.generator = g.str();
  return ds;
}

LabeledDataset subsample(const LabeledDataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.size()) {
    throw ValueError("subsample size " + std::to_string(n) + " exceeds dataset size " +
                     std::to_string(ds.size()));
  }
  // Partial Fisher-Yates over the index vector.
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng(seed).fork(0x737562);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  const std::size_t d = ds.dim();
  std::vector<double> xs(n * d);
  std::vector<int> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) xs[i * d + j] = ds.x.at2(idx[i], j);
    ys[i] = ds.y[idx[i]];
  }
  LabeledDataset out;
  out.x = Tensor::from_data({n, d}, std::move(xs));
  out.y = std::move(ys);
  out.classes = ds.classes;
  out.split = ds.split;
  out.generator = ds.generator + "|subsample(n=" + std::to_string(n) +
                  ",seed=" + std::to_string(seed) + ")";
  return out;
}

void save_dataset_csv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const std::size_t d = ds.dim();
  for (std::size_t j = 0; j < d; ++j) f << "x" << j << ",";
  f << "label\n";
  char buf[40];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.x.at2(i, j));
      f << buf << ",";
    }
    f << ds.y[i] << "\n";
  }
  if (!f) throw IoError("write failed for '" + path + "'");
}

LabeledDataset load_dataset_csv(const std::string& path, std::size_t classes, Split split) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open dataset file '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty dataset file '" + path + "'");
  std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<double> xs;
  std::vector<int> ys;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::getline(ss, cell, ',')) throw IoError("short row in '" + path + "'");
      xs.push_back(std::stod(cell));
    }
    if (!std::getline(ss, cell, ',')) throw IoError("missing label in '" + path + "'");
    ys.push_back(std::stoi(cell));
  }
  LabeledDataset ds;
  ds.x = Tensor::from_data({ys.size(), d}, std::move(xs));
  ds.y = std::move(ys);
  ds.classes = classes;
  ds.split = split;
  ds.generator = "csv:" + path;
  return ds;
}

}  // namespace gradmask
