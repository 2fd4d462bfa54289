#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace callipaint {

// Deterministic seeding discipline: one root seed, named substreams derived
// by hashing (root, name, index). Two components that name the same
// substream see exactly the same numbers.
std::uint64_t mix_seed(std::uint64_t root, std::string_view name,
                       std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng substream(std::uint64_t root, std::string_view name,
                       std::uint64_t index = 0) {
    return Rng(mix_seed(root, name, index));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  std::vector<float> normal_vector(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace callipaint
