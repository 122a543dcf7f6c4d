#pragma once

#include <cstdint>
#include <random>

namespace arks {

// Mixes a base seed with a stream index so independent jobs (per sample,
// per restart, per seed) draw from decorrelated generators regardless of the
// order in which they run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Thin wrapper over mt19937_64 with portable uniform/normal draws (the
// std:: distributions are implementation-defined, which would make results
// depend on the standard library).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace arks
