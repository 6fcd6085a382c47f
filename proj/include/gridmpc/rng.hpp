#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic sampling utilities.
//
// Every random quantity in the project is drawn through std::mt19937_64
// (whose output sequence is fully specified by the C++ standard) combined
// with explicit bit-level mappings to doubles, so that a given 64-bit seed
// produces identical values on every platform and standard library.
// std::uniform_real_distribution and friends are avoided on purpose: their
// output is implementation-defined.

namespace gridmpc::rng {

// SplitMix64 mixing step, used to derive independent substreams from a
// master seed plus integer tags (e.g. an edge or a (node, step) pair).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(a)) ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

// Uniform double in [0,1) from the top 53 bits of one engine output.
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& eng, double lo, double hi) {
  return lo + uniform01(eng) * (hi - lo);
}

// Standard normal via Box-Muller (cosine branch; one value per two draws).
inline double gaussian(std::mt19937_64& eng) {
  double u1 = uniform01(eng);
  double u2 = uniform01(eng);
  // guard against log(0)
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace gridmpc::rng
