#ifndef JUMPFILTER_RNG_HPP
#define JUMPFILTER_RNG_HPP

#include <cstdint>
#include <random>

namespace jumpfilter {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; decorrelates derived stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed for sub-stream `stream` of a base seed. Independent streams for
// parallel batches are derived this way instead of jumping one generator.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(base ^ mix64(stream + 0x6a09e667f3bcc909ULL));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

}  // namespace jumpfilter

#endif
