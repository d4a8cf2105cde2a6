#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tactile {

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derive an independent stream seed from a base seed and a path of indices
/// (frame, node, purpose...). Parallel workers that derive their own stream
/// produce the same numbers regardless of execution order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(base);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632BE59BD9B4E019ULL));
  return s;
}

enum class Stream : std::uint64_t { jitter = 1, noise = 2, words = 3, activity = 4, trial = 5 };

inline std::mt19937_64 make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  return std::mt19937_64(derive_seed(base, path));
}

}  // namespace tactile
