#pragma once

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace qkdlink {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Random-access stream: the value at (seed, counter, lane) never depends on
/// what else was drawn, so any slot of a long stream can be evaluated lazily.
constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t counter,
                                     std::uint64_t lane = 0) noexcept {
  return mix64(seed ^ mix64(counter ^ mix64(lane + 0x632BE59BD9B4E019ULL)));
}

/// Top 53 bits as a double in [0, 1).
constexpr double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Child seed for an independent named substream (FNV-1a over the label).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return mix64(seed ^ h);
}

/// Unbiased integer in [0, bound) from a 64-bit engine (rejection on the top
/// remainder). Spelled out instead of std::uniform_int_distribution because
/// both link ends must derive identical permutations from a shared seed.
inline std::uint64_t bounded_draw(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

/// Upper Gaussian tail Q(z) = P(N(0,1) > z).
inline double gaussian_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

/// Mass of N(0, sigma^2) inside [lo, hi).
inline double gaussian_mass(double sigma, double lo, double hi) {
  if (hi <= lo) return 0.0;
  if (sigma <= 0.0) return (lo <= 0.0 && 0.0 < hi) ? 1.0 : 0.0;
  if (lo >= 0.0) return gaussian_tail(lo / sigma) - gaussian_tail(hi / sigma);
  if (hi <= 0.0) return gaussian_tail(-hi / sigma) - gaussian_tail(-lo / sigma);
  return 1.0 - gaussian_tail(-lo / sigma) - gaussian_tail(hi / sigma);
}

/// Draw from N(0, sigma^2) conditioned on [lo, hi) by CDF inversion; tails are
/// inverted through erfc so far windows keep their precision.
inline double truncated_gaussian(Rng& rng, double sigma, double lo, double hi) {
  if (sigma <= 0.0) return std::clamp(0.0, lo, std::nextafter(hi, lo));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double root2 = std::sqrt(2.0);
  double x;
  if (lo >= 0.0 || hi <= 0.0) {
    const bool mirrored = hi <= 0.0;
    const double a = mirrored ? -hi : lo;
    const double b = mirrored ? -lo : hi;
    const double qa = std::erfc(a / (root2 * sigma));
    const double qb = std::isfinite(b) ? std::erfc(b / (root2 * sigma)) : 0.0;
    const double q = qb + (qa - qb) * unit(rng);
    x = q > 0.0 ? root2 * sigma * boost::math::erfc_inv(q) : a;
    if (mirrored) x = -x;
  } else {
    const double pa = std::erfc(-lo / (root2 * sigma));
    const double pb = std::erfc(-hi / (root2 * sigma));
    const double p = pa + (pb - pa) * unit(rng);
    x = -root2 * sigma * boost::math::erfc_inv(p);
  }
  return std::clamp(x, lo, std::nextafter(hi, lo));
}

}  // namespace qkdlink
