#pragma once

#include "qkdlink/transmitter.hpp"

#include <array>
#include <cstdint>

namespace qkdlink {

struct BasisCounts {
  std::uint64_t n_z = 0;  // sifted Z (Alice Z, Bob Z)
  std::uint64_t m_z = 0;  // Z errors
  std::uint64_t n_x = 0;  // monitor X (Alice X, Bob X)
  std::uint64_t m_x = 0;  // X errors (destructive port)

  BasisCounts& operator+=(const BasisCounts& o) {
    n_z += o.n_z;
    m_z += o.m_z;
    n_x += o.n_x;
    m_x += o.m_x;
    return *this;
  }
  friend bool operator==(const BasisCounts&, const BasisCounts&) = default;
};

/// Tallies per intensity, plus the simulated time they took.
struct MonitorStats {
  std::array<BasisCounts, 2> by_intensity{};  // indexed by Intensity
  std::uint64_t elapsed_qubit_slots = 0;
  double elapsed_time_s = 0.0;

  BasisCounts& operator[](Intensity i) { return by_intensity[static_cast<std::size_t>(i)]; }
  const BasisCounts& operator[](Intensity i) const { return by_intensity[static_cast<std::size_t>(i)]; }

  BasisCounts total() const {
    BasisCounts t = by_intensity[0];
    t += by_intensity[1];
    return t;
  }
  double q_z() const {
    const auto t = total();
    return t.n_z ? static_cast<double>(t.m_z) / static_cast<double>(t.n_z) : 0.0;
  }
  double phi_raw() const {
    const auto t = total();
    return t.n_x ? static_cast<double>(t.m_x) / static_cast<double>(t.n_x) : 0.0;
  }

  MonitorStats& operator+=(const MonitorStats& o) {
    by_intensity[0] += o.by_intensity[0];
    by_intensity[1] += o.by_intensity[1];
    elapsed_qubit_slots += o.elapsed_qubit_slots;
    elapsed_time_s += o.elapsed_time_s;
    return *this;
  }
  friend bool operator==(const MonitorStats&, const MonitorStats&) = default;
};

}  // namespace qkdlink
