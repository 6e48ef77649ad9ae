#pragma once

#include <cstdint>
#include <random>

namespace windchart {

/// One splitmix64 output for a given state word.
inline std::uint64_t splitmix64_at(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for the stream addressed by (seed, round, index).  Streams are
/// independent of evaluation order, so permutations can run in parallel and
/// still reproduce the serial results.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t round,
                                 std::uint64_t index) {
  std::uint64_t h = splitmix64_at(seed);
  h = splitmix64_at(h ^ (round + 0x9E3779B97F4A7C15ULL));
  h = splitmix64_at(h ^ (index + 0xBF58476D1CE4E5B9ULL));
  return h;
}

/// Uniform integer in [0, n).  Rejection sampling on the engine's raw output;
/// does not depend on std::uniform_int_distribution, whose output sequence is
/// implementation defined.
template <class Engine>
std::uint64_t uniform_below(Engine& eng, std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
  std::uint64_t r;
  do {
    r = eng();
  } while (r >= limit);
  return r % n;
}

/// Uniform double in [0, 1) from the top 53 bits.
template <class Engine>
double uniform_unit(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Fisher-Yates shuffle using uniform_below, so the permutation sequence is
/// identical on every platform for a given engine state.
template <class Engine, class T>
void shuffle_values(Engine& eng, T* data, std::size_t n) {
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(eng, i));
    T tmp = data[i - 1];
    data[i - 1] = data[j];
    data[j] = tmp;
  }
}

using RandomEngine = std::mt19937_64;

inline RandomEngine make_engine(std::uint64_t seed, std::uint64_t round,
                                std::uint64_t index) {
  return RandomEngine(derive_seed(seed, round, index));
}

}  // namespace windchart
