#pragma once

// Alice's symbol source and the four-level time-bin encoder.

#include "qkdlink/random.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace qkdlink {

enum class Basis : std::uint8_t { z = 0, x = 1 };
enum class Intensity : std::uint8_t { signal = 0, decoy = 1 };

inline constexpr const char* to_string(Basis b) { return b == Basis::z ? "Z" : "X"; }
inline constexpr const char* to_string(Intensity i) { return i == Intensity::signal ? "signal" : "decoy"; }

struct EmissionConfig {
  double mu_signal = 0.50;
  double mu_decoy = 0.26;
  double p_z_alice = 0.80;
  double p_signal = 0.50;
  double qubit_rate_hz = 1.25e9;
  double phase_alice = 0.0;
  /// Fraction of a Z pulse leaking into the empty bin; 0 means ideal extinction.
  double extinction_floor = 0.0;

  double mu(Intensity i) const { return i == Intensity::signal ? mu_signal : mu_decoy; }
  double p_intensity(Intensity i) const { return i == Intensity::signal ? p_signal : 1.0 - p_signal; }
  double p_basis(Basis b) const { return b == Basis::z ? p_z_alice : 1.0 - p_z_alice; }

  void validate() const {
    if (!(mu_decoy > 0.0 && mu_decoy < mu_signal))
      throw std::invalid_argument("EmissionConfig: need 0 < mu_decoy < mu_signal");
    if (!(p_z_alice > 0.0 && p_z_alice <= 1.0))
      throw std::invalid_argument("EmissionConfig: p_z_alice must lie in (0, 1]");
    if (!(p_signal > 0.0 && p_signal < 1.0))
      throw std::invalid_argument("EmissionConfig: p_signal must lie in (0, 1)");
    if (!(qubit_rate_hz > 0.0)) throw std::invalid_argument("EmissionConfig: qubit_rate must be > 0");
    if (!(extinction_floor >= 0.0 && extinction_floor < 0.5))
      throw std::invalid_argument("EmissionConfig: extinction_floor must lie in [0, 0.5)");
  }
};

/// One prepared state. The 3-state protocol has a single X state, so an X
/// symbol always carries bit 0.
struct StateSymbol {
  std::uint64_t index = 0;
  Basis basis = Basis::z;
  std::uint8_t bit = 0;
  Intensity intensity = Intensity::signal;

  friend bool operator==(const StateSymbol&, const StateSymbol&) = default;
};

/// Mean photon numbers of the early / late bins.
struct AmplitudePattern {
  double mu_early = 0.0;
  double mu_late = 0.0;
  double relative_phase = 0.0;

  double total() const { return mu_early + mu_late; }
};

/// Deterministic symbol stream. symbol_at(k) is a pure function of (seed, k),
/// so the channel model can look up any slot without replaying the stream.
class SymbolStream {
 public:
  SymbolStream(std::uint64_t seed, const EmissionConfig& config) : seed_(seed), config_(config) {
    config_.validate();
  }

  StateSymbol symbol_at(std::uint64_t index) const {
    const double u_basis = unit_interval(counter_hash(seed_, index, 0));
    const double u_intensity = unit_interval(counter_hash(seed_, index, 1));
    const std::uint64_t bit_word = counter_hash(seed_, index, 2);
    StateSymbol s;
    s.index = index;
    s.basis = u_basis < config_.p_z_alice ? Basis::z : Basis::x;
    s.intensity = u_intensity < config_.p_signal ? Intensity::signal : Intensity::decoy;
    s.bit = s.basis == Basis::z ? static_cast<std::uint8_t>(bit_word >> 63) : 0;
    return s;
  }

  StateSymbol next() { return symbol_at(position_++); }

  std::uint64_t position() const { return position_; }
  std::uint64_t seed() const { return seed_; }
  const EmissionConfig& config() const { return config_; }

 private:
  std::uint64_t seed_;
  EmissionConfig config_;
  std::uint64_t position_ = 0;
};

inline StateSymbol draw_symbol(SymbolStream& stream) { return stream.next(); }

/// Z0 -> (mu, 0), Z1 -> (0, mu), X -> (mu/2, mu/2) at phase_alice.
inline AmplitudePattern encode(const StateSymbol& symbol, const EmissionConfig& config) {
  const double mu = config.mu(symbol.intensity);
  if (symbol.basis == Basis::x) return AmplitudePattern{0.5 * mu, 0.5 * mu, config.phase_alice};
  const double leak = config.extinction_floor * mu;
  return symbol.bit == 0 ? AmplitudePattern{mu - leak, leak, 0.0}
                         : AmplitudePattern{leak, mu - leak, 0.0};
}

}  // namespace qkdlink
