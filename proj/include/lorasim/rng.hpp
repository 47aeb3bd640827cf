#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lorasim {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

/// Deterministic stream. Draws are built from raw engine output rather than
/// std distributions, whose algorithms differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), n > 0.
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double exponential(double mean);

 private:
  std::mt19937_64 engine_;
};

/// Master seed plus stable labels: each entity draws from its own stream so
/// adding an entity never shifts another's draws.
class RngFactory {
 public:
  explicit RngFactory(std::uint64_t master_seed) : seed_(master_seed) {}
  Rng stream(std::string_view label) const { return Rng(splitmix64(seed_ ^ fnv1a64(label))); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace lorasim
