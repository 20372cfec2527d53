#pragma once

// Portable deterministic streams. Every pseudo-random quantity in the project
// (token embeddings, synthetic worlds, frame noise, parameter init, shuffles)
// is a pure function of 64-bit keys run through these helpers, so results are
// bit-reproducible across platforms and standard library implementations.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>
#include <vector>

namespace md {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// splitmix64 output mixer. Callers advance the state themselves by adding
// multiples of kGoldenGamma.
inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform in [0, 1) with 53 bits of precision.
inline constexpr double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform in [-1, 1).
inline constexpr double signed_unit(std::uint64_t bits) noexcept { return unit_interval(bits) * 2.0 - 1.0; }

// Folds a sequence of integer keys into one stream key.
inline constexpr std::uint64_t stream_key(std::uint64_t seed) noexcept { return splitmix64(seed); }

template <typename... Rest>
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t next, Rest... rest) noexcept {
  return stream_key(splitmix64(seed + kGoldenGamma) ^ splitmix64(next + 2 * kGoldenGamma), rest...);
}

// Value number `index` of the stream identified by `key`.
inline constexpr std::uint64_t stream_bits(std::uint64_t key, std::uint64_t index) noexcept {
  return splitmix64(key + (index + 1) * kGoldenGamma);
}

// Standard normal variate from one stream position (Box-Muller, cosine branch).
inline double stream_gaussian(std::uint64_t key) noexcept {
  const double u1 = unit_interval(stream_bits(key, 0));
  const double u2 = unit_interval(stream_bits(key, 1));
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Sequential generator over a keyed stream; used where draws happen in order.
class SplitMixStream {
 public:
  explicit SplitMixStream(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next() noexcept { return stream_bits(key_, counter_++); }
  double uniform() noexcept { return unit_interval(next()); }
  // Uniform integer in [0, n), n > 0. Modulo bias is below n / 2^64.
  std::uint64_t below(std::uint64_t n) noexcept { return next() % n; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Fisher-Yates permutation of [0, n) driven by the keyed stream.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t key) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  SplitMixStream rng(key);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

}  // namespace md
