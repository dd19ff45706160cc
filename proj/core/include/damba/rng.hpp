#pragma once

#include <cmath>
#include <cstdint>

namespace damba {

// Seeded xoshiro256** with a splitmix64 seeder. All randomness in the
// engine flows through instances of this class so runs are reproducible
// bit-for-bit across platforms; std:: distributions are avoided on purpose.
class Rng {
 public:
  explicit Rng(uint64_t seed) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t x = seed;
    for (int i = 0; i < 4; ++i) s_[i] = splitmix64(x);
    has_cached_normal_ = false;
    cached_normal_ = 0.0;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; second value cached deterministically.
  double normal() {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
  }

  // Uniform index in [0, n). n must be > 0.
  uint64_t next_below(uint64_t n) {
    // Multiply-shift; bias is negligible for the small n used here.
    const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<uint64_t>(m >> 64);
  }

  // Derived independent stream for a named purpose.
  Rng fork(uint64_t stream_tag) const {
    uint64_t x = s_[0] ^ (stream_tag * 0x9e3779b97f4a7c15ULL) ^ s_[3];
    return Rng(splitmix64(x));
  }

  // State access for checkpointing.
  void state(uint64_t out[4], bool& has_cached, double& cached) const {
    for (int i = 0; i < 4; ++i) out[i] = s_[i];
    has_cached = has_cached_normal_;
    cached = cached_normal_;
  }
  void set_state(const uint64_t in[4], bool has_cached, double cached) {
    for (int i = 0; i < 4; ++i) s_[i] = in[i];
    has_cached_normal_ = has_cached;
    cached_normal_ = cached;
  }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  uint64_t s_[4] = {};
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace damba
