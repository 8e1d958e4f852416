#pragma once

#include <cstdint>
#include <random>

namespace smartmask {

// Platform-stable random stream. std::mt19937_64 and std::seed_seq are fully
// specified by the standard; the distributions are not, so uniform and normal
// draws are derived here by hand.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed, std::uint64_t stream = 0);

  // Uniform on [0, 1).
  double uniform();
  // Uniform on (0, 1).
  double uniform_open();
  // Standard normal via Box-Muller; caches the second variate.
  double normal();

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace smartmask
