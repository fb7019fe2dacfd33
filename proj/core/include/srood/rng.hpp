#pragma once

#include <array>
#include <cstdint>

namespace srood {

/// Deterministic random generator (xoshiro256**) with explicit stream
/// derivation.  All stochastic choices in the library draw from an Rng that
/// is derived from (seed, stream id[, substream id]), so independent
/// concerns (weight init, batch sampling, erosion choice, ...) never share
/// state and any iteration of an algorithm can be reproduced in isolation.
class Rng {
public:
  /// Fixed stream ids used across the library.  Derived substreams index a
  /// loop iteration inside the stream.
  enum Stream : std::uint64_t {
    kWeightInit = 1,
    kBatch = 2,
    kErosion = 3,
    kPhi = 4,
    kDiagnostics = 5,
    kBaseline = 6,
  };

  explicit Rng(std::uint64_t seed) { seed_state(mix64(seed)); }

  /// Generator for stream `id` of `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t id) {
    return Rng(mix64(mix64(seed) ^ id));
  }

  /// Generator for substream `sub` (e.g. a loop iteration) of stream `id`.
  static Rng stream(std::uint64_t seed, std::uint64_t id, std::uint64_t sub) {
    return Rng(mix64(mix64(mix64(seed) ^ id) ^ sub));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; never zero, safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).  Unbiased (masked rejection).  n must be >= 1.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
      const std::uint64_t r = next() & mask;
      if (r < n) return r;
    }
  }

  /// Standard normal via Box-Muller.  One value per pair of draws; no cached
  /// state, so the generator state alone determines the sequence.
  double normal();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  /// splitmix64 finalizer; used both for stream derivation and state seeding.
  static std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  void seed_state(std::uint64_t x) {
    // splitmix64 sequence seeds the four words; never all-zero.
    for (auto& w : s_) {
      x += 0x9E3779B97F4A7C15ull;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      w = z ^ (z >> 31);
    }
  }

  std::array<std::uint64_t, 4> s_{};
};

}  // namespace srood
