#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

namespace commonsense {

/// Philox4x32-10 block function (Salmon et al., Random123). Pure: the same
/// (counter, key) always yields the same four words on every platform.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// SplitMix64 finalizer, used to derive child seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for a named child computation, e.g. trial `index` of a meta-test.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Counter-based generator. A generator is identified by (seed, stream);
/// streams never overlap, so replicate k of a bootstrap can use stream k and
/// be evaluated in any order or thread.
///
/// All derived draws (uniform doubles, bounded integers, normals) are defined
/// here rather than through <random> distributions, whose output is
/// implementation-defined.
class CounterRng {
 public:
  using result_type = std::uint32_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent generator for substream `index` under the same seed.
  CounterRng substream(std::uint64_t index) const noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() noexcept;

  /// Uniform integer on [0, n), unbiased. n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() noexcept;

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  // UniformRandomBitGenerator surface, for interop only.
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return 0xFFFFFFFFu; }
  result_type operator()() noexcept { return next_u32(); }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  unsigned used_ = 4;
};

}  // namespace commonsense
