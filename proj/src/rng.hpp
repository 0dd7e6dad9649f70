#pragma once

#include <cmath>
#include <cstdint>

namespace clusdiff {

/// Counter-based random stream. A draw is a pure function of
/// (seed, stream, counter), so independent streams can be handed to
/// parallel workers and the results do not depend on scheduling.
class Rng {
 public:
  Rng() : Rng(0, 0) {}
  Rng(uint64_t seed, uint64_t stream)
      : seed_(seed), stream_(stream), counter_(0) {}

  static uint64_t mix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  /// Stateless draw: the value at (seed, stream, counter).
  static uint64_t at(uint64_t seed, uint64_t stream, uint64_t counter) {
    uint64_t h = mix(seed);
    h = mix(h ^ (stream * 0xD1B54A32D192ED03ull));
    h = mix(h ^ (counter * 0x8CB92BA72F3D8DD7ull));
    return h;
  }

  /// Derive a child seed, e.g. one stream per sample id.
  static uint64_t derive(uint64_t seed, uint64_t salt) {
    return mix(mix(seed) ^ (salt * 0x9E3779B97F4A7C15ull));
  }

  uint64_t next_u64() { return at(seed_, stream_, counter_++); }

  /// Uniform in [0, 1).
  double uniform() {
    return double(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the spare is cached per stream.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Integer in [0, n), n >= 1.
  uint64_t below(uint64_t n) {
    // Modulo bias is < 2^-53 for our n; fine at this scale.
    return next_u64() % n;
  }

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t counter_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace clusdiff
