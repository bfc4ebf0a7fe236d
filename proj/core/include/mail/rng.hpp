#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mail {

/// Derives an independent stream seed for a named consumer ("data", "init",
/// "attack", "rpf", "man", ...) from a single root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view consumer);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, std::string_view consumer) : engine_(derive_seed(root, consumer)) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  /// Inclusive integer range.
  long uniform_int(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(engine_); }
  std::uint64_t next() { return engine_(); }

  std::vector<double> normal_vector(std::size_t n, double mean, double stddev);
  std::vector<std::size_t> permutation(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mail
