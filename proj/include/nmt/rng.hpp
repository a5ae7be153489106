#pragma once

#include <cstdint>
#include <vector>

namespace nmt {

// Deterministic 64-bit generator (xorshift-multiply, splitmix64 stepping).
// Every draw is defined down to the bit so seeded runs reproduce exactly
// regardless of platform or standard library.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, bound), bias-free via rejection.
  uint64_t next_below(uint64_t bound) {
    const uint64_t threshold = -bound % bound;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_real(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  uint64_t state_;
};

// Derives an independent stream for a labeled sub-task (epoch, step, ...).
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed ^ (0xff51afd7ed558ccdull * (stream + 1));
  z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
  return z ^ (z >> 33);
}

}  // namespace nmt
