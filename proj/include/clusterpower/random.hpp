#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace clusterpower {

using Seed = std::uint64_t;

/// Stream tags keep seeds of unrelated consumers apart.
enum class Stream : std::uint64_t {
  Catalog = 1,
  TieBreak = 2,
  NullCalibration = 3,
  ConditionalCalibration = 4,
  GridCell = 5,
  RateStatistics = 6,
};

inline constexpr std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of item `index` in `stream`, a pure function of its arguments.
/// Workers can therefore process trials in any order with identical results.
inline constexpr Seed derive_seed(Seed master, Stream stream, std::uint64_t index) {
  std::uint64_t state = master;
  std::uint64_t h = splitmix64_next(state);
  state = h ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL);
  h = splitmix64_next(state);
  state = h ^ index;
  return splitmix64_next(state);
}

/// xoshiro256** seeded through splitmix64. Satisfies UniformRandomBitGenerator.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Xoshiro256(Seed seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64_next(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4]{};
};

/// Uniform double on [0, 1) with 53 random bits.
template <class Engine>
double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Exponential variate by inversion.
template <class Engine>
double exponential(Engine& engine, double rate) {
  return -std::log1p(-uniform01(engine)) / rate;
}

}  // namespace clusterpower
