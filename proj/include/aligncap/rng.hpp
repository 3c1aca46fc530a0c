#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace aligncap {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over the bytes of `text`; used to derive stable per-name streams.
std::uint64_t hash_name(std::string_view text);

/// Counter-based generator: draw n is mix64(seed + n * golden_gamma).
///
/// The stream is a pure function of (seed, counter), so a generator can be
/// copied to replay an identical sequence (dropout masks, view sampling).
/// Only integer arithmetic is used to produce uniforms, which keeps draws
/// bit-identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream keyed by `key`. Does not advance this stream.
  Rng split(std::uint64_t key) const;
  Rng split(std::string_view key) const { return split(hash_name(key)); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace aligncap
