#pragma once

#include <cstdint>
#include <random>

namespace tadpole {

// Mixes a base seed with a key so independent sub-streams (per window, per
// episode, per sweep cell) can be replayed without sharing state.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key);

// Explicitly seeded random stream. Copyable; a copy replays the same draws.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace tadpole
