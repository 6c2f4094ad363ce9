#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradmask/tensor.hpp"

namespace gradmask {

enum class Split { kTrain, kTest };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Synthetic classification data in [0,1]^D. Immutable after generation.
struct LabeledDataset {
  Tensor x;                 // [n, d], every value in [0,1]
  std::vector<int> y;       // labels in [0, classes)
  std::size_t classes = 0;
  Split split = Split::kTrain;
  std::string generator;    // name + parameters + seed, for provenance

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.dim(1); }
};

/// C Gaussian clusters. Centers live in [0.25,0.75]^D and are chained at
/// distance 6*spread apart so the epsilon-ball attack budget is meaningful;
/// samples are clamped to [0,1]. Train and test draw from distinct
/// sub-streams of the same generator (same centers, disjoint samples).
LabeledDataset gen_blobs(std::size_t d, std::size_t c, std::size_t n_per_class, double spread,
                         std::uint64_t seed, Split split = Split::kTrain);

/// Two concentric rings (radii 0.15 / 0.35 around (0.5,0.5)) in the first two
/// coordinates; remaining coordinates uniform in [0.45,0.55].
LabeledDataset gen_rings(std::size_t d, std::size_t n_per_class, double noise,
                         std::uint64_t seed, Split split = Split::kTrain);

/// Deterministic uniform subsample without replacement, preserving the split tag.
LabeledDataset subsample(const LabeledDataset& ds, std::size_t n, std::uint64_t seed);

/// CSV with header x0..x{d-1},label.
void save_dataset_csv(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset_csv(const std::string& path, std::size_t classes, Split split);

}  // namespace gradmask
