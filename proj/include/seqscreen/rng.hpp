#pragma once

// Portable pseudo-random stream. The standard distributions are
// implementation-defined, so every draw used by the pipeline goes through the
// helpers here; std::mt19937_64 itself is fully specified by the standard.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace seqscreen {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `stream` of a run seeded with `base`
/// (trees, bootstrap iterations, folds, ...).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(mix64(base) ^ (stream + 0x632be59bd9b4e019ULL));
}

/// 64-bit FNV-1a over the raw bytes of `text`:
///   h = 0xcbf29ce484222325; for each byte b: h = (h ^ b) * 0x100000001b3 (mod 2^64)
constexpr std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). Rejection sampling on the raw 64-bit output.
  std::size_t below(std::size_t n) {
    const auto bound = static_cast<std::uint64_t>(n);
    // 2^64 mod bound; values below it would bias the modulo.
    const std::uint64_t reject_below = (0 - bound) % bound;
    std::uint64_t x = next();
    while (x < reject_below) x = next();
    return static_cast<std::size_t>(x % bound);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates from the back: for i = n-1..1 swap(v[i], v[below(i+1)]).
  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace seqscreen
