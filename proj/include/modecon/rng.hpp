#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace modecon {

/// Derives an independent seed for a named substream ("data", "init-1", "curve", ...).
std::uint64_t derive_seed(std::uint64_t base, std::string_view name);
std::uint64_t derive_seed(std::uint64_t base, std::string_view name, std::uint64_t index);

/// Seeded 64-bit Mersenne Twister with the handful of draws the library needs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  std::uint64_t next() { return engine_(); }

  /// Uniformly random permutation of 0..n-1.
  std::vector<int> permutation(int n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace modecon
