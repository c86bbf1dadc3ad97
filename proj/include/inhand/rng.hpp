#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace inhand {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent sub-stream seed from a master seed and a path of
/// integer labels, e.g. (seed, update index, lane index). The result depends
/// only on its arguments, never on the order in which streams are created.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t label : path) h = splitmix64(h ^ splitmix64(label + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(master, path));
}

// Stream labels used throughout the library so streams never collide.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSelect = 2;
inline constexpr std::uint64_t kExplore = 3;
inline constexpr std::uint64_t kObservationNoise = 4;
inline constexpr std::uint64_t kScript = 5;
inline constexpr std::uint64_t kGroundTruth = 6;
}  // namespace stream

/// Standard normal draw. Always consumes the stream the same way, so a zero
/// sigma multiplied in afterwards yields exactly zero without desynchronising.
inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace inhand
