#pragma once

#include <cstdint>

namespace epiflow {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Named streams. Adding draws to one stream never shifts another.
enum class Stream : std::uint64_t {
  Pose = 1,
  Points = 2,
  Noise = 3,
  Outliers = 4,
  Scene = 5,
  Pool = 16,
  Hypothesis = 17,
  Probe = 32,
};

/// Counter-based generator: draw k of stream s under seed is a pure function
/// of (seed, s, sub, k), so results never depend on execution order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0) noexcept
      : key_(mix64(mix64(seed) ^ mix64(static_cast<std::uint64_t>(stream) * 0x100000001b3ULL) ^
                   mix64(~substream))) {}

  std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n) (Lemire's multiply-and-reject). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    for (;;) {
      const u128 m = static_cast<u128>(next_u64()) * n;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= n || low >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() noexcept;

  std::uint64_t draws() const noexcept { return counter_; }

 private:
  __extension__ using u128 = unsigned __int128;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace epiflow
