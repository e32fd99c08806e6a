#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace snrilab {

// Deterministic, splittable random stream (xoshiro256** core seeded through
// splitmix64). std::random distributions are implementation-defined, so the
// uniform/normal transforms here are spelled out to keep runs reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal (Marsaglia polar).
  double normal();
  double normal(double mean, double stddev);
  bool bernoulli(double p);

  // Derived child stream; identical (parent seed, tag) pairs give identical
  // children regardless of how much the parent has been consumed.
  Rng child(std::string_view tag) const;
  Rng child(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable 64-bit hash for stream tags (FNV-1a).
std::uint64_t hash_tag(std::string_view tag);

// splitmix64 step; used for seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace snrilab
