#pragma once

// Broadened pulse width against fiber length for the laser presets, with
// the 400 ps bin width as the reference line.

#include "qkdlink/harness/csv.hpp"
#include "qkdlink/optics.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace qkdlink::harness {

struct DispersionPreset {
  std::string label;
  optics::PulseSpec pulse;  // chirp magnitude from widths; sign chosen per fiber
  optics::ChirpSign sign = optics::ChirpSign::worst_case;
};

inline std::vector<DispersionPreset> default_dispersion_presets(double wavelength_nm = 1550.12) {
  return {
      {"fourier_40ps", optics::fourier_limited_pulse(40.0, wavelength_nm), optics::ChirpSign::none},
      {"laser_0.170nm_40ps", optics::PulseSpec{40.0, 0.170, wavelength_nm, 0.0}},
      {"tuned_0.094nm_108ps", optics::PulseSpec{108.0, 0.094, wavelength_nm, 0.0}},
  };
}

/// 0, step, 2 step, ... up to and including max_km (within rounding).
inline std::vector<double> z_grid(double max_km, double step_km) {
  if (!(step_km > 0.0) || !(max_km >= 0.0)) throw std::invalid_argument("z_grid: need step > 0 and max >= 0");
  std::vector<double> z;
  const auto n = static_cast<std::size_t>(std::floor(max_km / step_km + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) z.push_back(static_cast<double>(i) * step_km);
  return z;
}

struct DispersionSweep {
  std::vector<std::string> labels;
  std::vector<double> z_km;
  std::vector<std::vector<double>> fwhm_ps;  // [preset][z]
  double reference_ps = 400.0;

  /// First grid length where a preset exceeds the reference; NaN if never.
  double crossing_km(std::size_t preset) const {
    for (std::size_t i = 0; i < z_km.size(); ++i)
      if (fwhm_ps[preset][i] > reference_ps) return z_km[i];
    return NAN;
  }
};

inline DispersionSweep sweep_dispersion(const std::vector<DispersionPreset>& presets, const std::vector<double>& z_km,
                                        double dispersion_ps_nm_km = 17.0, double reference_ps = 400.0) {
  DispersionSweep s;
  s.z_km = z_km;
  s.reference_ps = reference_ps;
  for (const auto& p : presets) {
    p.pulse.validate();
    s.labels.push_back(p.label);
    std::vector<double> col;
    col.reserve(z_km.size());
    for (double z : z_km) {
      const optics::FiberSpec fiber{z, 0.0, dispersion_ps_nm_km};
      col.push_back(optics::broadened_fwhm(optics::with_measured_chirp(p.pulse, p.sign, fiber), fiber));
    }
    s.fwhm_ps.push_back(std::move(col));
  }
  return s;
}

/// z_km, one column per preset, reference_ps.
inline void write_sweep_csv(std::ostream& out, const DispersionSweep& s) {
  std::vector<std::string> header{"z_km"};
  for (const auto& l : s.labels) header.push_back(l + "_ps");
  header.push_back("reference_ps");
  write_csv_row(out, header);
  for (std::size_t i = 0; i < s.z_km.size(); ++i) {
    std::vector<std::string> row{number(s.z_km[i])};
    for (const auto& col : s.fwhm_ps) row.push_back(number(col[i]));
    row.push_back(number(s.reference_ps));
    write_csv_row(out, row);
  }
}

}  // namespace qkdlink::harness
