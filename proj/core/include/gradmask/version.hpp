#pragma once

namespace gradmask {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever the model or perturbation file layout changes.
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kPerturbationFormatVersion = 1;

}  // namespace gradmask
