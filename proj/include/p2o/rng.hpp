#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace p2o {

// Derives an independent stream seed from a base seed and a path of tags
// (splitmix64 finalizer folded over the tags). Used to pre-split randomness
// so that concurrent and serial execution draw identical numbers.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags)
      : engine_(derive_seed(base, tags)) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal (Box-Muller, no cached second variate).
  double normal();

  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  // Index drawn proportionally to nonnegative weights; uniform when they sum to zero.
  std::size_t categorical(std::span<const double> weights);

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace p2o
