#pragma once

// Toeplitz hashing over GF(2): privacy amplification and the 64-bit
// verification hash.
//
// For an n-bit input x and seed-derived diagonal bits r[0 .. n+l-2],
// output bit i is  y_i = XOR_j r[i + n - 1 - j] x_j,  i.e. T[i][j] = r[i - j + n - 1].

#include "qkdlink/distillation/bits.hpp"
#include "qkdlink/random.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qkdlink::distill {

/// The n + l - 1 diagonal bits, LSB-first in 64-bit words from mt19937_64(seed).
inline std::vector<std::uint64_t> toeplitz_diagonals(std::uint64_t seed, std::size_t n, std::size_t l) {
  const std::size_t bits = n + l - 1;
  std::vector<std::uint64_t> r((bits + 63) / 64 + 1, 0);
  Rng rng(seed);
  for (std::size_t w = 0; w + 1 < r.size(); ++w) r[w] = rng();
  if (bits % 64) r[r.size() - 2] &= (std::uint64_t{1} << (bits % 64)) - 1;
  return r;
}

inline Bits toeplitz_hash(const Bits& key, std::size_t l, std::uint64_t seed) {
  if (l > key.size()) throw std::invalid_argument("toeplitz_hash: output longer than input");
  Bits out(l, 0);
  if (l == 0) return out;
  const std::size_t n = key.size();
  Bits reversed(key.rbegin(), key.rend());
  const auto x = pack_words(reversed);
  const auto r = toeplitz_diagonals(seed, n, l);
  const std::size_t words = x.size();
  for (std::size_t i = 0; i < l; ++i) {
    const std::size_t base = i >> 6;
    const unsigned shift = static_cast<unsigned>(i & 63);
    std::uint64_t acc = 0;
    for (std::size_t w = 0; w < words; ++w) {
      std::uint64_t window = r[base + w] >> shift;
      if (shift) window |= r[base + w + 1] << (64 - shift);
      acc ^= window & x[w];
    }
    out[i] = static_cast<std::uint8_t>(std::popcount(acc) & 1);
  }
  return out;
}

/// Seeded 64-bit universal hash for key verification.
inline std::uint64_t verification_hash(const Bits& key, std::uint64_t seed) {
  if (key.empty()) return 0;
  // Pad short keys so the 64 x n Toeplitz matrix is defined.
  Bits padded = key;
  padded.push_back(1);
  while (padded.size() < 64) padded.push_back(0);
  const auto h = toeplitz_hash(padded, 64, seed);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 64; ++i) v |= std::uint64_t{h[i]} << i;
  return v;
}

inline bool verify_keys(const Bits& a, const Bits& b, std::uint64_t seed) {
  if (a.size() != b.size()) throw std::invalid_argument("verify_keys: length mismatch");
  return verification_hash(a, seed) == verification_hash(b, seed);
}

struct SecretKeyResult {
  Bits key;
  std::uint64_t length_l = 0;
  double skr_bps = 0.0;
};

inline SecretKeyResult privacy_amplify(const Bits& key, std::size_t l, std::uint64_t seed, double elapsed_time_s = 0.0) {
  if (l > key.size()) throw std::invalid_argument("privacy_amplify: l exceeds key length");
  SecretKeyResult r;
  r.key = toeplitz_hash(key, l, seed);
  r.length_l = l;
  r.skr_bps = elapsed_time_s > 0.0 ? static_cast<double>(l) / elapsed_time_s : 0.0;
  return r;
}

}  // namespace qkdlink::distill
