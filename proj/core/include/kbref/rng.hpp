#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace kbref {

// Deterministic 64-bit generator (splitmix64). Pinned by hand so seeded runs
// reproduce bit-for-bit across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent seed for a named stream (e.g. one per parameter
  // tensor), so adding a tensor does not shift the draws of the others.
  static uint64_t derive(uint64_t seed, std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ull ^ seed;
    for (char c : tag) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  uint64_t state_;
};

}  // namespace kbref
