#pragma once

#include <cstdint>
#include <random>

namespace tmkt {

using Engine = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds from a root seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  return mix64(mix64(root) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
  return derive_seed(derive_seed(root, stream), index);
}

// Named streams so unrelated consumers of one root seed never collide.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kMix = 3;
inline constexpr std::uint64_t kPairing = 4;
inline constexpr std::uint64_t kScene = 5;
inline constexpr std::uint64_t kReplication = 6;
inline constexpr std::uint64_t kBatchDraw = 7;
inline constexpr std::uint64_t kBootstrap = 8;
}  // namespace streams

}  // namespace tmkt
