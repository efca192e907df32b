#pragma once
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace neurlp {

// FNV-1a, 64 bit. Used for named rng streams, artifact checksums and
// order-canonicalization of trajectory batches.
inline uint64_t fnv1a(const void* data, size_t len,
                      uint64_t h = 14695981039346656037ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a(std::string_view s) { return fnv1a(s.data(), s.size()); }

inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Every random draw in the project flows from one root seed through a named
// stream; two streams with different names are independent for fixed seed.
inline std::mt19937_64 rng_stream(uint64_t seed, std::string_view name) {
  uint64_t x = seed ^ fnv1a(name);
  uint64_t a = splitmix64(x);
  uint64_t b = splitmix64(x);
  std::seed_seq seq{uint32_t(a), uint32_t(a >> 32), uint32_t(b),
                    uint32_t(b >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace neurlp
