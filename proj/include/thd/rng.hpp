#pragma once

#include <cstdint>
#include <string_view>

namespace thd {

// Self-contained counter-based RNG. The standard <random> engines would do,
// but their distributions are not pinned by the standard; every sampling
// decision in this project must be reproducible bit-for-bit across platforms
// and thread counts, so we keep the whole path in-house.
//
// Streams are derived from (seed, stream id) so that parallel consumers
// (bootstrap resamples, per-tensor drop masks) draw identical sequences
// regardless of scheduling.

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // decorrelate trivially related seeds
    splitmix64(state_);
  }

  Rng(uint64_t seed, uint64_t stream) : state_(seed ^ (0x9e3779b97f4a7c15ull * (stream + 1))) {
    splitmix64(state_);
  }

  Rng(uint64_t seed, std::string_view stream_name) : Rng(seed, fnv1a64(stream_name)) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, n) via 128-bit multiply (Lemire); unbiased enough here and,
  // unlike std::uniform_int_distribution, identical everywhere
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // uniform double in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform double in [lo, hi)
  double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool next_bernoulli(double p) { return next_double() < p; }

 private:
  uint64_t state_;
};

}  // namespace thd
