#pragma once

#include <cstdint>
#include <random>

namespace lsgp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent generator for (seed, stream, index). Every path owns one, so the
/// output of a batch never depends on how paths are spread across workers.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index) {
  const std::uint64_t a = splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ull));
  const std::uint64_t b = splitmix64(a ^ splitmix64(index));
  std::seed_seq seq{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32)};
  return std::mt19937_64(seq);
}

// Stream identifiers; distinct purposes never share random numbers.
inline constexpr std::uint64_t kPathStream = 1;
inline constexpr std::uint64_t kIndexStream = 2;

}  // namespace lsgp
