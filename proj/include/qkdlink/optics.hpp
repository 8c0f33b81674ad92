#pragma once

// Chirped-Gaussian pulse propagation in standard fiber and the timing /
// interference quantities the receiver model needs from it.
//
// Units: time in ps, wavelength in nm, length in km, dispersion D in
// ps/(nm km), GVD beta2 in ps^2/km.

#include "qkdlink/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace qkdlink::optics {

inline constexpr double kSpeedOfLightNmPerPs = 299792.458;

/// Fourier limit of a Gaussian, delta_nu * delta_t in FWHM units (2 ln2 / pi).
inline constexpr double kGaussianTimeBandwidth = 2.0 * std::numbers::ln2 / std::numbers::pi;

/// FWHM -> 1/e intensity half-width T0 (same factor for time and angular frequency).
inline double fwhm_to_half_width(double fwhm) { return fwhm / (2.0 * std::sqrt(std::numbers::ln2)); }
inline double half_width_to_fwhm(double t0) { return t0 * 2.0 * std::sqrt(std::numbers::ln2); }

/// FWHM -> standard deviation of the Gaussian intensity profile.
inline double fwhm_to_sigma(double fwhm) { return fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2)); }

struct PulseSpec {
  double temporal_fwhm_ps = 40.0;
  double spectral_fwhm_nm = 0.170;
  double center_wavelength_nm = 1550.12;
  double chirp = 0.0;  // signed C

  void validate() const;
};

struct FiberSpec {
  double length_km = 0.0;
  double total_loss_db = 0.0;
  double dispersion_ps_nm_km = 17.0;

  static FiberSpec from_loss_per_km(double length_km, double loss_db_per_km,
                                    double dispersion_ps_nm_km = 17.0) {
    return FiberSpec{length_km, length_km * loss_db_per_km, dispersion_ps_nm_km};
  }
  void validate() const;
};

/// Two bins per qubit; the qubit period is always twice the bin width.
struct TimeBinGrid {
  double bin_width_ps = 400.0;

  double qubit_period_ps() const { return 2.0 * bin_width_ps; }
  void validate() const {
    if (!(bin_width_ps > 0.0) || !std::isfinite(bin_width_ps))
      throw std::invalid_argument("TimeBinGrid: bin_width must be > 0");
  }
};

/// beta2 = -D lambda^2 / (2 pi c), signed.
inline double gvd_beta2(double dispersion_ps_nm_km, double wavelength_nm) {
  if (!std::isfinite(dispersion_ps_nm_km) || !std::isfinite(wavelength_nm))
    throw std::invalid_argument("gvd_beta2: non-finite input");
  if (wavelength_nm <= 0.0) throw std::invalid_argument("gvd_beta2: wavelength must be > 0");
  return -dispersion_ps_nm_km * wavelength_nm * wavelength_nm /
         (2.0 * std::numbers::pi * kSpeedOfLightNmPerPs);
}

/// Spectral FWHM in frequency (1/ps) for a wavelength FWHM around lambda.
inline double spectral_fwhm_frequency(double spectral_fwhm_nm, double wavelength_nm) {
  return kSpeedOfLightNmPerPs * spectral_fwhm_nm / (wavelength_nm * wavelength_nm);
}

inline double time_bandwidth_product(double temporal_fwhm_ps, double spectral_fwhm_nm,
                                     double wavelength_nm) {
  return spectral_fwhm_frequency(spectral_fwhm_nm, wavelength_nm) * temporal_fwhm_ps;
}

/// Wavelength FWHM of the transform-limited Gaussian with this duration.
inline double transform_limited_spectral_fwhm(double temporal_fwhm_ps, double wavelength_nm) {
  return kGaussianTimeBandwidth * wavelength_nm * wavelength_nm /
         (kSpeedOfLightNmPerPs * temporal_fwhm_ps);
}

/// |C| from measured widths. Both FWHMs are converted to 1/e half-widths, so
/// delta_omega0 * T0 = sqrt(1 + C^2), i.e. TBP = 0.441 sqrt(1 + C^2).
inline double chirp_from_widths(double temporal_fwhm_ps, double spectral_fwhm_nm,
                                double wavelength_nm) {
  if (!(temporal_fwhm_ps > 0.0) || !(spectral_fwhm_nm > 0.0) || !(wavelength_nm > 0.0))
    throw std::invalid_argument("chirp_from_widths: widths and wavelength must be > 0");
  const double ratio =
      time_bandwidth_product(temporal_fwhm_ps, spectral_fwhm_nm, wavelength_nm) /
      kGaussianTimeBandwidth;
  constexpr double kTolerance = 1e-9;
  if (ratio < 1.0 - kTolerance) throw std::domain_error("sub-Fourier pulse");
  if (ratio <= 1.0 + kTolerance) return 0.0;
  return std::sqrt(ratio * ratio - 1.0);
}

inline double chirp_from_widths(const PulseSpec& pulse) {
  return chirp_from_widths(pulse.temporal_fwhm_ps, pulse.spectral_fwhm_nm,
                           pulse.center_wavelength_nm);
}

inline void PulseSpec::validate() const {
  if (!(temporal_fwhm_ps > 0.0)) throw std::invalid_argument("PulseSpec: temporal_fwhm must be > 0");
  if (!(center_wavelength_nm > 0.0))
    throw std::invalid_argument("PulseSpec: center_wavelength must be > 0");
  if (!std::isfinite(chirp)) throw std::invalid_argument("PulseSpec: chirp must be finite");
  // Throws for sub-Fourier widths.
  (void)chirp_from_widths(*this);
}

inline void FiberSpec::validate() const {
  if (!(length_km >= 0.0) || !std::isfinite(length_km))
    throw std::invalid_argument("FiberSpec: length must be >= 0");
  if (!(total_loss_db >= 0.0) || !std::isfinite(total_loss_db))
    throw std::invalid_argument("FiberSpec: total_loss must be >= 0");
  if (!std::isfinite(dispersion_ps_nm_km))
    throw std::invalid_argument("FiberSpec: dispersion must be finite");
}

enum class ChirpSign { worst_case, positive, negative, none };

inline ChirpSign parse_chirp_sign(const std::string& s) {
  if (s == "worst" || s == "worst_case") return ChirpSign::worst_case;
  if (s == "positive" || s == "+") return ChirpSign::positive;
  if (s == "negative" || s == "-") return ChirpSign::negative;
  if (s == "none" || s == "0") return ChirpSign::none;
  throw std::invalid_argument("unknown chirp sign '" + s + "'");
}

/// Pulse whose chirp magnitude comes from its widths. The worst case picks
/// sign(C) = sign(beta2), which makes C beta2 > 0 and broadening monotone.
inline PulseSpec with_measured_chirp(PulseSpec pulse, ChirpSign sign, const FiberSpec& fiber) {
  const double magnitude = chirp_from_widths(pulse);
  switch (sign) {
    case ChirpSign::none: pulse.chirp = 0.0; break;
    case ChirpSign::positive: pulse.chirp = magnitude; break;
    case ChirpSign::negative: pulse.chirp = -magnitude; break;
    case ChirpSign::worst_case: {
      const double beta2 = gvd_beta2(fiber.dispersion_ps_nm_km, pulse.center_wavelength_nm);
      pulse.chirp = beta2 < 0.0 ? -magnitude : magnitude;
      break;
    }
  }
  return pulse;
}

/// Transform-limited pulse of the given duration (C = 0).
inline PulseSpec fourier_limited_pulse(double temporal_fwhm_ps, double wavelength_nm) {
  return PulseSpec{temporal_fwhm_ps, transform_limited_spectral_fwhm(temporal_fwhm_ps, wavelength_nm),
                   wavelength_nm, 0.0};
}

/// Dispersion length T0^2 / |beta2| (infinite without dispersion).
inline double dispersion_length_km(const PulseSpec& pulse, const FiberSpec& fiber) {
  const double beta2 = gvd_beta2(fiber.dispersion_ps_nm_km, pulse.center_wavelength_nm);
  const double t0 = fwhm_to_half_width(pulse.temporal_fwhm_ps);
  return beta2 == 0.0 ? INFINITY : t0 * t0 / std::abs(beta2);
}

/// Output FWHM after the fiber:
///   T1/T0 = sqrt((1 + C xi)^2 + xi^2),  xi = beta2 z / T0^2 = sign(beta2) z / L_D.
inline double broadened_fwhm(const PulseSpec& pulse, const FiberSpec& fiber) {
  const double beta2 = gvd_beta2(fiber.dispersion_ps_nm_km, pulse.center_wavelength_nm);
  const double t0 = fwhm_to_half_width(pulse.temporal_fwhm_ps);
  const double xi = beta2 * fiber.length_km / (t0 * t0);
  const double a = 1.0 + pulse.chirp * xi;
  return pulse.temporal_fwhm_ps * std::sqrt(a * a + xi * xi);
}

/// Fractions of a bin-centered Gaussian pulse landing in the nearest
/// neighboring bins. Deeper tails are dropped (nearest-neighbor ISI only).
struct BinLeakage {
  double own_bin = 1.0;          // |x| < w/2
  double adjacent_bin = 0.0;     // w/2 < x < 3w/2: the other bin of the same qubit
  double neighbor_period = 0.0;  // -3w/2 < x < -w/2: nearest bin of the neighboring qubit
};

inline BinLeakage bin_leakage_probability(double broadened_fwhm_ps, const TimeBinGrid& grid) {
  if (!(broadened_fwhm_ps >= 0.0))
    throw std::invalid_argument("bin_leakage_probability: width must be >= 0");
  const double sigma = fwhm_to_sigma(broadened_fwhm_ps);
  const double w = grid.bin_width_ps;
  BinLeakage out;
  out.own_bin = gaussian_mass(sigma, -0.5 * w, 0.5 * w);
  out.adjacent_bin = gaussian_mass(sigma, 0.5 * w, 1.5 * w);
  out.neighbor_period = gaussian_mass(sigma, -1.5 * w, -0.5 * w);
  return out;
}

/// X-basis error floor of an interferometer with visibility V: (1 - V) / 2.
inline double visibility_error_floor(double visibility) {
  if (!(visibility >= 0.0 && visibility <= 1.0))
    throw std::invalid_argument("visibility must lie in [0, 1]");
  return 0.5 * (1.0 - visibility);
}

struct PortProbabilities {
  double correct = 1.0;
  double error = 0.0;
};

/// Two-output interferometer response at phase mismatch delta_phase.
inline PortProbabilities interference_click_probabilities(double delta_phase, double visibility) {
  if (!(visibility >= 0.0 && visibility <= 1.0))
    throw std::invalid_argument("visibility must lie in [0, 1]");
  const double error = std::clamp(0.5 * (1.0 - visibility * std::cos(delta_phase)), 0.0, 1.0);
  return PortProbabilities{1.0 - error, error};
}

/// Arrival-time spread: dispersion-broadened pulse convolved with detector jitter.
inline double arrival_sigma_ps(const PulseSpec& pulse, const FiberSpec& fiber, double jitter_sigma_ps) {
  const double s = fwhm_to_sigma(broadened_fwhm(pulse, fiber));
  return std::sqrt(s * s + jitter_sigma_ps * jitter_sigma_ps);
}

}  // namespace qkdlink::optics
