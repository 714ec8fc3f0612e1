#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace swb {

/// Seeded random source. Every consumer derives its own stream from
/// (seed, ids...) so results do not depend on evaluation order or threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream keyed by a base seed and a tuple of ids.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    return Rng(derive_seed(seed, ids));
  }
  static std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Inclusive integer range.
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  /// Inverse-CDF draw from (possibly unnormalized) nonnegative weights.
  int categorical(std::span<const double> weights);

  std::mt19937_64& engine() { return engine_; }
  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace swb
