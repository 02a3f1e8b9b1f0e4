#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>

#include "arae/tensor.hpp"

namespace arae {

/// xoshiro256** seeded through splitmix64.
///
/// The stream depends only on the 64-bit seed, so draws are identical across
/// runs, compilers and platforms. Floating-point helpers use the top 53 bits of
/// each output; Gaussian draws use the Box-Muller transform and cache the
/// second variate of each pair. Shuffling is a hand-written Fisher-Yates pass
/// because `std::shuffle` is implementation-defined.
class SeededRng {
 public:
  using result_type = std::uint64_t;

  explicit SeededRng(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform in [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal.
  double normal() noexcept;

  template <typename T>
  BasicTensor<T> normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0);
  template <typename T>
  BasicTensor<T> uniform_tensor(Shape shape, double lo, double hi);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  /// A generator seeded from this one's next output; used to give independent
  /// consumers their own stream.
  SeededRng fork();

  const std::array<std::uint64_t, 4>& state() const noexcept { return s_; }

 private:
  std::array<std::uint64_t, 4> s_{};
  std::optional<double> spare_;
};

}  // namespace arae
