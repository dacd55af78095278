#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace venomlab {

// 64-bit FNV-1a, used for feature hashing, substream derivation and file
// checksums. Fixed constants keep every artifact bit-reproducible across
// platforms.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic substream key: fold extra keys into a base seed. Used to give
// each (prompt, sample) its own random stream so parallel and serial
// execution produce identical outputs.
inline uint64_t derive_seed(uint64_t seed, uint64_t a) { return mix64(seed ^ mix64(a)); }
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return mix64(derive_seed(seed, a) ^ mix64(b + 0x632be59bd9b4e019ull));
}

// Minimal splitmix64 generator. std::mt19937_64 would do, but the
// distributions in <random> are implementation-defined; this keeps sampled
// values identical everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). Modulo bias is negligible for desk-scale n.
  size_t next_below(size_t n) { return n == 0 ? 0 : static_cast<size_t>(next_u64() % n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace venomlab
