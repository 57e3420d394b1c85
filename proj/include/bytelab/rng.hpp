#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace bytelab {

// Deterministic RNG. std::mt19937_64 is fully specified by the standard, but
// the std distributions are not, so all draws go through our own helpers to
// keep results identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next() { return eng_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
  uint64_t below(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller (no cached spare, so the draw count per
  // call is fixed and replayable).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a label.
inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(base ^ h);
}

}  // namespace bytelab
