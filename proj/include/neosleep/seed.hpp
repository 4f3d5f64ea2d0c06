#pragma once

#include <cstdint>

namespace neosleep {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a key.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key) {
  std::uint64_t s = master ^ (key * 0xD1B54A32D192ED03ULL);
  splitmix64(s);
  return splitmix64(s);
}

}  // namespace neosleep
