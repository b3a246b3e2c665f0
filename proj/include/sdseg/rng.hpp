#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace sdseg {

// splitmix64: tiny, fast, and stable across platforms. All randomness in the
// project flows through this so that runs are reproducible bit-for-bit.
inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  return splitmix64(s);
}

inline uint64_t hash_str(std::string_view s) {
  // FNV-1a 64
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Deterministic random stream. Streams derived from (seed, key...) are
// independent of evaluation order and worker count.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(splitmix64(seed)) {}
  RngStream(uint64_t seed, uint64_t key) : state_(hash_combine(seed, key)) {}
  RngStream(uint64_t seed, uint64_t key_a, uint64_t key_b)
      : state_(hash_combine(hash_combine(seed, key_a), key_b)) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  bool next_bool() { return (next_u64() & 1ULL) != 0; }

  // standard normal via Box-Muller (spare cached)
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sdseg
