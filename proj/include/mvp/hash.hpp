#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mvp {

// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

// SplitMix64 finalizer; used to derive independent, order-free random
// streams from (seed, key) pairs.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform double in [0, 1) from a 64-bit value.
constexpr double unit_interval(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

// Stable 64-bit key of a string (first 8 bytes of its SHA-256).
std::uint64_t stable_key(std::string_view data);

}  // namespace mvp
