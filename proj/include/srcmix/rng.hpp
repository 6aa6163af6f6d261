#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace srcmix {

/// SplitMix64 (Steele, Lea & Flood 2014). Used to expand a user seed into
/// generator state and to derive independent sub-streams. One fixed,
/// documented recurrence so every "random" artifact output is reproducible
/// across platforms:
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// xoshiro256** 1.0 (Blackman & Vigna 2018), seeded by four SplitMix64
/// outputs as the authors recommend. This is the project-wide generator:
/// subsampling, synthetic corpora, parameter init and epoch shuffles all
/// draw from it, so equal seeds give bit-identical results everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& s : s_) s = sm.next();
  }

  std::uint64_t next_u64() {
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

  /// Unbiased integer in [0, bound) by rejection: draws are discarded while
  /// they fall in the tail that would skew the modulus.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= threshold) return x % bound;
    }
  }

  /// Uniform double in [0, 1): top 53 bits scaled by 2^-53.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// In-place Fisher-Yates shuffle (descending index form).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Uniform n-subset of {0,...,pool-1} without replacement, ascending.
  /// Partial Fisher-Yates over the index array, then sort of the prefix.
  std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t n);

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
};

inline std::vector<std::size_t> Rng::sample_indices(std::size_t pool, std::size_t n) {
  std::vector<std::size_t> idx(pool);
  for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
  if (n > pool) n = pool;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(next_below(pool - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  // ascending output keeps the original relative order of the data
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Derives a child seed for a named sub-stream. The tag is folded in with
/// SplitMix64 so distinct tags give decorrelated streams of the same seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  SplitMix64 sm(seed ^ (0x9E3779B97F4A7C15ULL * (tag + 1)));
  return sm.next();
}

}  // namespace srcmix
