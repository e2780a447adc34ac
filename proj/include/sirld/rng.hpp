#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

/**
 * \file
 * \brief Counter-keyed random streams.
 *
 * Every random draw in the library comes from an `Rng` whose state is derived from a
 * triple (master seed, purpose tag, index). Environments, initial states and trajectories
 * therefore use independent streams, and replica `r` of an experiment is reproducible on
 * its own without replaying replicas `0..r-1`.
 */

namespace sirld {

/// Purpose tags for stream derivation. Values are part of the reproducibility contract.
enum class StreamTag : std::uint64_t {
  environment = 0x454e56ULL,
  initial_state = 0x494e4954ULL,
  trajectory = 0x5452414aULL,
  delta = 0x44454c54ULL,
  delta_trial = 0x44545249ULL,
  replica = 0x5245504cULL,
  command = 0x434d44ULL,
};

/// SplitMix64 output function (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the stream keyed by (master, tag, index).
constexpr std::uint64_t derive_seed(std::uint64_t master, StreamTag tag, std::uint64_t index) noexcept {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ static_cast<std::uint64_t>(tag));
  return mix64(h ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// xoshiro256++ generator. Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept {
    std::uint64_t s = seed;
    for (auto& word : state_) {
      s += 0x9e3779b97f4a7c15ULL;
      word = mix64(s);
    }
  }

  Rng(std::uint64_t master, StreamTag tag, std::uint64_t index) noexcept
      : Rng(derive_seed(master, tag, index)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open() noexcept { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

  double exponential(double rate = 1.0) noexcept { return -std::log(uniform_open()) / rate; }

  /// Uniform integer in [0, bound), Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) noexcept {
    __uint128_t m = static_cast<__uint128_t>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<__uint128_t>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4]{};
};

}  // namespace sirld
