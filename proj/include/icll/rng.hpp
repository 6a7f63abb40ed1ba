#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace icll {

/// Counter-based generator "splitmix64-ctr", version 1.
///
/// The i-th output of a stream with key k is mix64(k + (i + 1) * gamma), where
/// mix64 is the SplitMix64 finalizer and gamma the 64-bit golden ratio. Child
/// streams are derived by hashing the parent key together with a label, so a
/// child depends only on (parent key, label) and never on how many values the
/// parent has produced. This makes datasets independent of generation order and
/// thread count.
///
/// All integer and real conversions are defined here rather than delegated to
/// <random> distributions, whose outputs differ between standard libraries.
class Rng {
 public:
  static constexpr int kVersion = 1;

  explicit Rng(std::uint64_t seed) : key_(mix64(seed ^ kSeedSalt)) {}

  std::uint64_t next_u64();

  /// Uniform integer on the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Uniform double on [0, 1) with 53 random bits.
  double uniform01();

  /// Exponential(1) variate; sums of these normalize to a Dirichlet(1) draw.
  double exponential();

  /// Draws `count` distinct values from `pool` uniformly without replacement,
  /// in draw order.
  template <typename T>
  std::vector<T> sample_without_replacement(std::span<const T> pool, std::size_t count) {
    std::vector<T> items(pool.begin(), pool.end());
    for (std::size_t i = 0; i < count; ++i) {
      auto j = static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i),
                                                    static_cast<std::int64_t>(items.size()) - 1));
      std::swap(items[i], items[j]);
    }
    items.resize(count);
    return items;
  }

  /// Index drawn from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);

  Rng child(std::uint64_t label) const;
  Rng child(std::string_view label) const;
  Rng child(std::string_view label, std::uint64_t index) const { return child(label).child(index); }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix64(std::uint64_t z);

 private:
  Rng(std::uint64_t key, std::uint64_t counter, int) : key_(key), counter_(counter) {}

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kSeedSalt = 0x6A09E667F3BCC909ULL;
  static constexpr std::uint64_t kChildSalt = 0xBB67AE8584CAA73BULL;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace icll
