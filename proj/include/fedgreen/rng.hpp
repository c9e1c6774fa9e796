#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedgreen {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a root seed and a tuple of stream
// coordinates (e.g. client id, round index). The result depends only on the
// values, never on call order.
inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = mix64(root);
  for (auto c : coords) h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags so that different consumers of the same coordinates never share
// a stream.
enum StreamTag : std::uint64_t {
  kTagInit = 1,
  kTagSample = 2,
  kTagLocalTrain = 3,
  kTagPartition = 4,
  kTagSplit = 5,
  kTagPopulation = 6,
  kTagBlobs = 7,
};

}  // namespace fedgreen
