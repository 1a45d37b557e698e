#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dmlp {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent stream keyed by (seed, key). Used so that results do not depend
// on the order in which streams are created.
inline Rng stream(std::uint64_t seed, std::uint64_t key) {
  return Rng(splitmix64(seed ^ splitmix64(key)));
}

inline Rng stream(std::uint64_t seed, std::string_view key) { return stream(seed, fnv1a64(key)); }

}  // namespace dmlp
