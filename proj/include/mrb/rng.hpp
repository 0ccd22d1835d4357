#pragma once

#include <cstdint>
#include <limits>
#include <span>

namespace mrb {

/// Deterministic xoshiro256** generator seeded through splitmix64.
///
/// Every derived quantity (uniform doubles, normals, bounded integers,
/// shuffles) is computed here rather than through <random> distributions,
/// whose algorithms are implementation-defined. The same seed yields the same
/// stream on every platform.
class SeededRng {
 public:
  using result_type = std::uint64_t;

  explicit SeededRng(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }
  std::uint64_t next();

  std::uint64_t seed() const { return seed_; }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; the spare value is cached.
  double normal();
  /// Uniform integer in [0, bound), unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t bound);

  /// An independent generator for a named sub-stream (e.g. init vs dropout).
  SeededRng fork(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finaliser; used for seeding and seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace mrb
