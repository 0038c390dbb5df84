#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <utility>

namespace recrank {

// SplitMix64 (Steele, Lea & Flood). Output is fully specified by the
// algorithm, so every seeded stream reproduces bit-for-bit on any platform.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Unbiased integer in [0, bound). bound must be > 0.
std::uint64_t uniform_below(SplitMix64& rng, std::uint64_t bound);

// Double in [0, 1) with 53 random bits.
double uniform_unit(SplitMix64& rng);

// Seed for an independent stream keyed by a label (e.g. a user id).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

template <typename T>
void shuffle(std::span<T> values, SplitMix64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace recrank
