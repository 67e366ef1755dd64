#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, counter...), so results never depend on iteration order
// or on how work is split across threads.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace besovlab::rng {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Hashes an arbitrary tuple of 64-bit words into one word.
template <class... Words>
constexpr std::uint64_t hash(std::uint64_t first, Words... rest) noexcept {
  std::uint64_t h = mix64(first);
  ((h = mix64(h ^ mix64(static_cast<std::uint64_t>(rest) + 0x632BE59BD9B4E019ull))), ...);
  return h;
}

/// Stream roles keep independent uses of one seed apart.
enum class Stream : std::uint64_t {
  path = 1,
  pattern = 2,
  increment = 3,
  direction = 4,
  synthetic = 5,
};

/// Uniform in the open interval (0, 1) with 53 bits of resolution.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

template <class... Words>
double uniform(std::uint64_t seed, Stream stream, Words... counter) noexcept {
  return to_unit(hash(seed, static_cast<std::uint64_t>(stream), counter...));
}

/// Standard normal via Box-Muller on two hashed uniforms.
template <class... Words>
double normal(std::uint64_t seed, Stream stream, Words... counter) noexcept {
  const std::uint64_t base = hash(seed, static_cast<std::uint64_t>(stream), counter...);
  const double u1 = to_unit(mix64(base ^ 0xA5A5A5A5A5A5A5A5ull));
  const double u2 = to_unit(mix64(base + 0x5851F42D4C957F2Dull));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Seed of path `index` derived from a base seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index,
                                    Stream role = Stream::path) noexcept {
  return hash(base, static_cast<std::uint64_t>(role), index);
}

}  // namespace besovlab::rng
