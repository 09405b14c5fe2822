#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fryshort {

/// Deterministic random stream. Wraps mt19937_64 but performs all
/// floating-point transforms by hand so that identical seeds produce
/// identical sequences on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be > 0.
  std::int64_t uniform_int(std::int64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev);
  /// Bernoulli with probability p of returning true.
  bool bernoulli(double p);

  /// Derived independent stream identified by a tag.
  Rng stream(std::uint64_t tag) const;
  Rng stream(std::string_view tag) const;

  /// 64-bit mixing (splitmix64 finalizer). Stable across platforms.
  static std::uint64_t mix(std::uint64_t x);
  static std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);
  static std::uint64_t hash_str(std::string_view s);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace fryshort
