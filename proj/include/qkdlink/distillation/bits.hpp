#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkdlink::distill {

/// One bit per byte (0 or 1). Simple to index; packed on demand.
using Bits = std::vector<std::uint8_t>;

/// h(p) = -p log2 p - (1-p) log2 (1-p), h(0) = h(1) = 0.
inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binary_entropy: p must lie in [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

inline std::vector<std::uint64_t> pack_words(const Bits& bits) {
  std::vector<std::uint64_t> w((bits.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) w[i >> 6] |= std::uint64_t{1} << (i & 63);
  return w;
}

inline std::size_t hamming_distance(const Bits& a, const Bits& b) {
  if (a.size() != b.size()) throw std::invalid_argument("hamming_distance: length mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] ^ b[i]) & 1u;
  return d;
}

inline std::string to_hex(const Bits& bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve((bits.size() + 3) / 4);
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    unsigned nibble = 0;
    for (std::size_t j = 0; j < 4; ++j) nibble = (nibble << 1) | (i + j < bits.size() ? bits[i + j] : 0u);
    out.push_back(kDigits[nibble]);
  }
  return out;
}

/// Fenwick tree over GF(2): point flips and prefix parities in O(log n).
class XorFenwick {
 public:
  XorFenwick() = default;
  explicit XorFenwick(const Bits& bits) : t_(bits.size() + 1, 0) {
    for (std::size_t i = 0; i < bits.size(); ++i) t_[i + 1] = bits[i] & 1u;
    for (std::size_t i = 1; i < t_.size(); ++i) {
      const std::size_t parent = i + (i & (~i + 1));
      if (parent < t_.size()) t_[parent] ^= t_[i];
    }
  }
  void flip(std::size_t i) {
    for (++i; i < t_.size(); i += i & (~i + 1)) t_[i] ^= 1u;
  }
  /// Parity of positions [0, end).
  std::uint8_t prefix(std::size_t end) const {
    std::uint8_t p = 0;
    for (; end > 0; end -= end & (~end + 1)) p ^= t_[end];
    return p;
  }
  std::uint8_t range(std::size_t begin, std::size_t end) const { return prefix(end) ^ prefix(begin); }

 private:
  std::vector<std::uint8_t> t_;
};

}  // namespace qkdlink::distill
