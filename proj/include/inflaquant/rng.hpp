#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace inflaquant {

// xoshiro256** with jump-based stream splitting. Each (base_seed, stream_id)
// pair owns a 2^128-long subsequence, so chains never overlap and a chain's
// draws do not depend on how many other chains exist.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  static Rng stream(std::uint64_t base_seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  // Advances the state by 2^128 steps.
  void jump();

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double exponential(double rate);
  // Gamma with shape/rate parameterisation. Never returns 0: tiny shapes
  // that underflow are floored at the smallest normal double.
  double gamma(double shape, double rate);
  double chi_squared(double df) { return gamma(0.5 * df, 0.5); }

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace inflaquant
