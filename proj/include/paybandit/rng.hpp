#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "paybandit/errors.hpp"

namespace paybandit {

// Seeded random stream with the distribution mappings implemented here rather
// than taken from <random>, so that draw sequences are identical across
// platforms and the complete state round-trips through snapshots.
// mt19937_64's raw output and its text serialization are standard-specified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0,1): bucket centers of a 2^53 grid, so the
  // result is never exactly 0 or 1 and log/log-log transforms stay finite.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * kInv53;
  }

  // Unbiased draw from [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) {
    assert(n > 0);
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<std::size_t>(x % n);
  }

  int bernoulli(double p) { return uniform01() < p ? 1 : 0; }

  static double gumbel_from_uniform(double u) {
    return -std::log(-std::log(u));
  }

  // Standard Gumbel(0,1) perturbation.
  double gumbel() { return gumbel_from_uniform(uniform01()); }

  // Box-Muller without the cached spare, keeping the draw count predictable.
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  // Marsaglia-Tsang; shapes below 1 are boosted through shape + 1.
  double gamma(double shape) {
    assert(shape > 0);
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    const double s = x + y;
    if (s <= 0.0) return a / (a + b);  // both shapes underflowed to zero mass
    return x / s;
  }

  std::string save() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void load(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw CorruptSnapshotError("malformed rng state");
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  static constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  std::mt19937_64 engine_;
};

}  // namespace paybandit
