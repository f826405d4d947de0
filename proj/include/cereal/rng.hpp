#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

namespace cereal {

/// Counter-based random stream. Draw i of a stream is a pure function of
/// (key, i), so forks and random-access draws never disturb the sequence
/// consumed elsewhere. Only integer mixing is used for the raw stream; it is
/// bit-identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  static Rng from_state(std::uint64_t key, std::uint64_t counter) {
    Rng r;
    r.key_ = key;
    r.counter_ = counter;
    return r;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept { return at(key_, counter_++); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return to_unit(next_u64()); }

  /// Uniform integer on [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;

  double normal();
  double gamma(double shape);
  double beta(double a, double b);

  /// Independent child stream identified by tag. Depends only on this
  /// stream's key, not on how much of it has been consumed.
  Rng fork(std::uint64_t tag) const noexcept;

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

  static std::uint64_t at(std::uint64_t key, std::uint64_t index) noexcept {
    return mix(key + (index + 1) * kGamma);
  }

  static double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  static std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace cereal
