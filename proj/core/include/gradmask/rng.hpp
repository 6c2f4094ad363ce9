#pragma once

#include <cmath>
#include <cstdint>

namespace gradmask {

/// Counter-based deterministic random stream (splitmix64). Every stream is a
/// pure function of its seed, so substreams forked per example / per epoch
/// give bit-identical results whether consumed serially or in parallel.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Derive an independent substream. fork(a) != fork(b) for a != b.
  Rng fork(std::uint64_t stream) const {
    return Rng(mix(state_ ^ mix(stream + 0x9e3779b97f4a7c15ULL)));
  }
  Rng fork(std::uint64_t a, std::uint64_t b) const { return fork(a).fork(b); }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (portable, no libm distribution state).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  /// Uniform over {-1.0, +1.0}.
  double sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace gradmask
