#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace omep {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child-stream seed keyed by (seed, k1, k2, ...). Draws made from streams
/// with distinct keys do not depend on the order streams are created, so
/// parallel and serial evaluation agree bit for bit.
inline std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(seed);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::mt19937_64 make_stream(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> keys) {
  return std::mt19937_64(stream_key(seed, keys));
}

}  // namespace omep
