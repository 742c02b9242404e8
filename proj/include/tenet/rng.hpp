#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tenet {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream tags keep draws of different purposes apart even when the
// remaining key components coincide.
enum class Stream : std::uint64_t {
  init_edge = 1,
  init_cloud = 2,
  schedule = 3,
  link = 4,
  activity = 5,
  crop = 6,
  eval_link = 7,
  eval_crop = 8,
  dataset = 9,
  distance = 10,
};

inline std::uint64_t stream_seed(std::uint64_t master, Stream tag,
                                 std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = mix64(master ^ mix64(static_cast<std::uint64_t>(tag)));
  for (std::uint64_t k : key) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

// An RNG whose state depends only on (master, tag, key), never on how many
// draws other entities made before it.
inline Rng keyed_rng(std::uint64_t master, Stream tag,
                     std::initializer_list<std::uint64_t> key) {
  return Rng(stream_seed(master, tag, key));
}

}  // namespace tenet
