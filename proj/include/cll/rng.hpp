#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cll/core.hpp"

namespace cll {

// splitmix64 finalizer; full-avalanche 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Keyed deterministic stream (splitmix64). Draw values are pinned by this
// header alone, not by any standard-library distribution, so runs are
// byte-reproducible across toolchains.
//
// fork(tags...) derives an independent stream from the *construction* key,
// not from the advanced state: fork results never depend on how many draws
// the parent has consumed. Per-unit streams are built as
// Rng(seed).fork(i) or Rng(seed).fork(batch_id, row).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed)), state_(mix64(mix64(seed))) {}

  template <typename... Tags>
  Rng fork(Tags... tags) const {
    std::uint64_t k = key_;
    ((k = mix64(k ^ mix64(static_cast<std::uint64_t>(tags)))), ...);
    Rng r(0);
    r.key_ = k;
    r.state_ = mix64(k);
    return r;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); unbiased (Lemire rejection).
  std::uint64_t next_below(std::uint64_t n) {
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t t = -n % n;
      while (lo < t) {
        m = static_cast<__uint128_t>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Marsaglia polar rejection.
  double next_normal() {
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }

  // Gamma(alpha, 1), Marsaglia-Tsang; alpha < 1 boosted through
  // Gamma(alpha + 1) * U^(1/alpha). Underflows to exactly 0.0 only for
  // extreme alpha; callers that form ratios must guard the zero-sum case.
  double next_gamma(double alpha) {
    if (!(alpha > 0.0)) throw ConfigError("gamma shape must be positive");
    if (alpha < 1.0) {
      double u = next_double();
      while (u == 0.0) u = next_double();
      return next_gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = next_normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  // In-place Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t state_;
};

}  // namespace cll
