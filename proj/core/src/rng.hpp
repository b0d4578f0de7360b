#pragma once

#include <cstdint>

namespace dlstm::detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent generator seed for (purpose tag, index) under a master seed.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(tag)) + index);
}

}  // namespace dlstm::detail
