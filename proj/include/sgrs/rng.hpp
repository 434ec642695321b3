#pragma once

// splitmix64-seeded xoshiro256** plus the handful of distributions the
// pipeline samples from. Everything here is implemented from the raw 64-bit
// stream so draws are identical across standard libraries.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <utility>

#include "sgrs/error.hpp"

namespace sgrs {

constexpr std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  std::uint64_t z = (x += UINT64_C(0x9e3779b97f4a7c15));
  z = (z ^ (z >> 30)) * UINT64_C(0xbf58476d1ce4e5b9);
  z = (z ^ (z >> 27)) * UINT64_C(0x94d049bb133111eb);
  return z ^ (z >> 31);
}

// Mixes several words into one seed. Used to key pure samplers by
// (seed, role, epoch, ...) tuples.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t x = a ^ (b * UINT64_C(0xd6e8feb86659fd93));
  std::uint64_t out = splitmix64(x);
  return out ^ splitmix64(x);
}

// Independent streams, one per consumer, so that changing how many draws one
// component makes never perturbs another.
enum class StreamRole : std::uint64_t { init = 1, data = 2, augment = 3, dataset = 4 };

class Xoshiro256 {
 public:
  using result_type = std::uint64_t;
  using State = std::array<std::uint64_t, 4>;

  explicit Xoshiro256(std::uint64_t seed = 0) noexcept { reseed(seed); }

  static Xoshiro256 for_role(std::uint64_t seed, StreamRole role) noexcept {
    return Xoshiro256(mix_seed(seed, static_cast<std::uint64_t>(role)));
  }

  void reseed(std::uint64_t seed) noexcept {
    for (auto& word : s_) word = splitmix64(seed);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
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

  const State& state() const noexcept { return s_; }
  void set_state(const State& s) {
    if (s[0] == 0 && s[1] == 0 && s[2] == 0 && s[3] == 0) {
      throw ContractError("xoshiro256** state must not be all zero");
    }
    s_ = s;
  }

  // [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("below(0)");
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return r % n;
  }

  // Box-Muller, one output per call (no cached spare, so the state alone is
  // enough to resume the stream).
  double normal(double mean = 0.0, double stddev = 1.0) noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Marsaglia-Tsang, with the shape < 1 boost.
  double gamma(double shape) {
    if (!(shape > 0.0) || !std::isfinite(shape)) throw ContractError("gamma shape must be > 0");
    if (shape < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Beta(a, b). Johnk's acceptance method (evaluated in log space so tiny
  // shapes cannot underflow both powers to zero) when both shapes are <= 1,
  // where it accepts with high probability; gamma ratio otherwise.
  double beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
      throw ContractError("beta shapes must be finite and > 0");
    }
    if (a <= 1.0 && b <= 1.0) {
      for (;;) {
        double u = uniform();
        double v = uniform();
        if (u <= 0.0 || v <= 0.0) continue;
        const double log_x = std::log(u) / a;
        const double log_y = std::log(v) / b;
        const double m = std::max(log_x, log_y);
        const double log_sum = m + std::log(std::exp(log_x - m) + std::exp(log_y - m));
        if (log_sum <= 0.0) return std::exp(log_x - log_sum);
      }
    }
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  State s_{};
};

}  // namespace sgrs
