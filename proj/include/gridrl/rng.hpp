#pragma once

// Deterministic seed derivation. Every stochastic component draws from an
// explicitly seeded std::mt19937_64; substream seeds are derived with
// splitmix64 so parallel workers stay order-independent.

#include <cstdint>
#include <random>

namespace gridrl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

// uniform double in [-amplitude, amplitude], a pure function of the inputs
inline double symmetric_noise(std::uint64_t seed, std::uint64_t index, double amplitude) {
  const std::uint64_t h = mix_seed(seed, index);
  const double u = static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);  // [0, 1)
  return amplitude * (2.0 * u - 1.0);
}

}  // namespace gridrl
