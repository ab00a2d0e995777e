#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace dpnc {

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic pseudorandom stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. All distribution transforms are implemented here rather than
/// taken from <random>, since the standard distributions are
/// implementation-defined and would break cross-platform reproducibility.
///
/// A stream is single-owner. Use split() to derive independent child streams
/// for other threads, episodes or particles; a child depends only on the
/// parent's seed and the index, never on how many draws the parent made.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  RngStream split(std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  /// Uniform integer on [0, n).
  std::size_t uniform_index(std::size_t n);
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);
  /// Inverse-gamma with shape a and rate (scale) b: b / Gamma(a, 1).
  double inverse_gamma(double a, double b);
  double beta(double a, double b);
  bool bernoulli(double p) { return uniform() < p; }
  /// Index drawn proportionally to nonnegative weights (need not sum to 1).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace dpnc
