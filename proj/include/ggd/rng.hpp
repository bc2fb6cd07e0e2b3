#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace ggd {

// Seedable, splittable pseudo-random generator.
//
// Streams are derived from a parent seed and a fixed text label so that
// every module draws from its own reproducible stream:
//
//   Rng root(cfg.seed);
//   Rng shuffle = root.split("shuffle/generator");
//
// Uniform draws are produced from the raw 64-bit engine output with an
// explicit conversion, which keeps sequences identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  // Child stream keyed by `label`. Does not advance this generator.
  Rng split(std::string_view label) const;
  // Child stream keyed by an integer (per-sentence / per-worker streams).
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  // Categorical draw by inverse CDF over (unnormalized, non-negative) weights.
  std::size_t categorical(std::span<const double> weights);

  // UniformRandomBitGenerator interface, for std::shuffle and friends.
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used for seed derivation.
std::uint64_t mix_seed(std::uint64_t x);

// Fisher-Yates shuffle driven by Rng::uniform_index, independent of the
// standard library's std::shuffle algorithm choice.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace ggd
