#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <numbers>
#include <vector>

namespace fm {

// Counter-based random streams. Every draw is a pure function of
// (seed, purpose, indices...), so any single value can be regenerated
// without replaying earlier draws.

enum class Purpose : std::uint64_t {
  Prototype = 1,
  TemplateNoise = 2,
  TrainImage = 3,
  TestImage = 4,
  Split = 5,
  FewShot = 6,
  Shuffle = 7,
  Instance = 8,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_key(std::uint64_t seed, Purpose purpose,
                                        std::initializer_list<std::uint64_t> indices) noexcept {
  std::uint64_t h = splitmix64(seed ^ 0xD1B54A32D192ED03ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  for (std::uint64_t i : indices) h = splitmix64(h ^ i);
  return h;
}

/// A keyed stream: value i of the stream is hash(key, i).
class Stream {
 public:
  constexpr explicit Stream(std::uint64_t key) noexcept : key_(key) {}
  Stream(std::uint64_t seed, Purpose purpose, std::initializer_list<std::uint64_t> indices) noexcept
      : key_(hash_key(seed, purpose, indices)) {}

  [[nodiscard]] constexpr std::uint64_t bits(std::uint64_t i) const noexcept {
    return splitmix64(key_ ^ splitmix64(i + 0x632BE59BD9B4E019ULL));
  }

  /// Uniform in (0, 1); never returns 0 so log() is safe.
  [[nodiscard]] double uniform(std::uint64_t i) const noexcept {
    return (static_cast<double>(bits(i) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on draws (2i, 2i+1).
  [[nodiscard]] double gaussian(std::uint64_t i) const noexcept {
    const double u1 = uniform(2 * i);
    const double u2 = uniform(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n) by rejection, consuming slots starting at `slot`.
  [[nodiscard]] std::uint64_t below(std::uint64_t n, std::uint64_t slot) const noexcept {
    const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} / n) * n;
    for (std::uint64_t attempt = 0;; ++attempt) {
      const std::uint64_t r = bits(slot * 64 + attempt);
      if (r < limit) return r % n;
    }
  }

 private:
  std::uint64_t key_;
};

/// Fisher-Yates permutation of [0, n), fully determined by the stream.
inline std::vector<std::size_t> permutation(std::size_t n, const Stream& stream) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = stream.below(i, i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace fm
