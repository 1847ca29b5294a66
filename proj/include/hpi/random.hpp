#pragma once

#include "hpi/types.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

namespace hpi {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Hash an ordered tuple of 64-bit words into one key.
constexpr std::uint64_t combine_key(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b + 0x632BE59BD9B4E019ULL));
}

template <class... Rest>
constexpr std::uint64_t make_key(std::uint64_t first, Rest... rest) noexcept {
  std::uint64_t k = mix64(first);
  ((k = combine_key(k, static_cast<std::uint64_t>(rest))), ...);
  return k;
}

/// Counter-based uniform random bit generator: output i is mix64(key + i * golden).
/// Two streams with different keys are statistically independent and any
/// output can be reproduced from (key, counter) alone.
class KeyedStream {
 public:
  using result_type = std::uint64_t;
  explicit constexpr KeyedStream(std::uint64_t key) noexcept : key_(key) {}
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
  result_type operator()() noexcept { return mix64(key_ + 0x9E3779B97F4A7C15ULL * (++counter_)); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Purpose tags mixed into keys so that actuator noise, sampled futures and
/// test draws never share a stream.
enum class StreamPurpose : std::uint64_t {
  Actuator = 1,
  Sampling = 2,
  Diagnostic = 3,
  Control = 4,
};

/// Standard normal vector of dimension `dim` drawn from the stream keyed by `key`.
inline Vec standard_normal(std::uint64_t key, int dim) {
  KeyedStream gen(key);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec z(dim);
  for (int i = 0; i < dim; ++i) z(i) = normal(gen);
  return z;
}

/// Wiener increments for one rollout: the increment at grid step i is
/// sqrt(dt) * N(0, I), keyed by (base key, i). Results are independent of the
/// order in which steps or rollouts are evaluated.
class KeyedNoise {
 public:
  explicit KeyedNoise(std::uint64_t base_key) noexcept : base_(base_key) {}
  Vec increment(std::size_t step, int dim, double dt) const {
    return std::sqrt(dt) * standard_normal(combine_key(base_, step), dim);
  }
  std::uint64_t key() const noexcept { return base_; }

 private:
  std::uint64_t base_;
};

/// Deterministic zero noise.
struct ZeroNoise {
  Vec increment(std::size_t, int dim, double) const { return Vec::Zero(dim); }
};

/// Explicit per-step increments (already scaled by sqrt(dt)); rows beyond the
/// array, or components beyond its width, read as zero.
class TabulatedNoise {
 public:
  TabulatedNoise() = default;
  explicit TabulatedNoise(std::vector<Vec> increments) : inc_(std::move(increments)) {}
  Vec increment(std::size_t step, int dim, double) const {
    Vec out = Vec::Zero(dim);
    if (step < inc_.size())
      for (int i = 0; i < dim && i < inc_[step].size(); ++i) out(i) = inc_[step](i);
    return out;
  }

 private:
  std::vector<Vec> inc_;
};

}  // namespace hpi
