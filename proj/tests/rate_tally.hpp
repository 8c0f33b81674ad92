#pragma once

// Per-detector click / error tallies from a raw event list, laid out like
// IntensityRates so Monte Carlo counts can be compared against expected_rates.

#include "qkdlink/slot_model.hpp"

#include <array>
#include <cmath>
#include <string>

namespace tally {

struct Counts {
  double z_click = 0, x_click = 0, z_sifted = 0, z_error = 0, x_monitor = 0, x_error = 0;
};

struct Tally {
  std::array<Counts, 2> by_intensity{};
  std::uint64_t slots = 0;
};

inline Tally count(const std::vector<qkdlink::DetectionEvent>& events, const qkdlink::SymbolStream& symbols,
                   std::uint64_t slots) {
  using namespace qkdlink;
  Tally t;
  t.slots = slots;
  for (const auto& e : events) {
    const auto s = symbols.symbol_at(e.qubit_index);
    auto& c = t.by_intensity[static_cast<std::size_t>(s.intensity)];
    if (e.detector == Detector::z) {
      ++c.z_click;
      if (s.basis == Basis::z) {
        ++c.z_sifted;
        c.z_error += (e.bin == Bin::early ? 0 : 1) != s.bit;
      }
    } else {
      ++c.x_click;
      if (s.basis == Basis::x) {
        ++c.x_monitor;
        c.x_error += e.port == Port::destructive;
      }
    }
  }
  return t;
}

/// Largest |observed - expected| / sigma over all tallies; each count is
/// treated as binomial over `slots` trials with the joint per-slot probability.
inline double worst_z_score(const Tally& t, const qkdlink::ExpectedRates& r, std::string* where = nullptr) {
  double worst = 0.0;
  const double n = static_cast<double>(t.slots);
  auto check = [&](double observed, double p, const char* name, int k) {
    const double mean = n * p;
    const double sd = std::sqrt(std::max(n * p * (1.0 - p), 1.0));
    const double z = std::abs(observed - mean) / sd;
    if (z > worst) {
      worst = z;
      if (where) *where = std::string(name) + (k == 0 ? "/signal" : "/decoy");
    }
  };
  for (int k = 0; k < 2; ++k) {
    const auto& c = t.by_intensity[static_cast<std::size_t>(k)];
    const auto& e = r.by_intensity[static_cast<std::size_t>(k)];
    const double w = e.slot_probability;
    check(c.z_click, w * e.z_click, "z_click", k);
    check(c.x_click, w * e.x_click, "x_click", k);
    check(c.z_sifted, w * e.z_sifted, "z_sifted", k);
    check(c.z_error, w * e.z_error, "z_error", k);
    check(c.x_monitor, w * e.x_monitor, "x_monitor", k);
    check(c.x_error, w * e.x_error, "x_error", k);
  }
  return worst;
}

}  // namespace tally
