#include "fft_pulse.hpp"
#include "qkdlink/optics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace qkdlink::optics;

namespace {

FiberSpec fiber_km(double z) { return FiberSpec::from_loss_per_km(z, 0.2); }

PulseSpec preset_fast() { return PulseSpec{40.0, 0.170, 1550.12, 0.0}; }
PulseSpec preset_tuned() { return PulseSpec{108.0, 0.094, 1550.12, 0.0}; }

}  // namespace

TEST(Beta2, ZeroDispersion) { EXPECT_EQ(gvd_beta2(0.0, 1550.0), 0.0); }

TEST(Beta2, StandardFiber) {
  EXPECT_NEAR(gvd_beta2(17.0, 1550.0), -21.68261939, 1e-7);
  EXPECT_NEAR(gvd_beta2(17.0, 1310.0), -15.48784314, 1e-7);
}

TEST(Beta2, RejectsBadInput) {
  EXPECT_THROW(gvd_beta2(NAN, 1550.0), std::invalid_argument);
  EXPECT_THROW(gvd_beta2(17.0, INFINITY), std::invalid_argument);
  EXPECT_THROW(gvd_beta2(17.0, 0.0), std::invalid_argument);
}

TEST(Chirp, TransformLimitIsZero) {
  const double dl = transform_limited_spectral_fwhm(40.0, 1550.12);
  EXPECT_EQ(chirp_from_widths(40.0, dl, 1550.12), 0.0);
  EXPECT_NEAR(time_bandwidth_product(40.0, dl, 1550.12), 0.4413, 1e-4);
}

TEST(Chirp, SubFourierRejected) {
  try {
    chirp_from_widths(40.0, 0.05, 1550.12);
    FAIL() << "expected domain_error";
  } catch (const std::domain_error& e) {
    EXPECT_STREQ(e.what(), "sub-Fourier pulse");
  }
}

TEST(Chirp, MeasuredPresets) {
  EXPECT_NEAR(chirp_from_widths(preset_fast()), 1.6420921, 1e-6);
  EXPECT_NEAR(chirp_from_widths(preset_tuned()), 2.6905308, 1e-6);
}

TEST(Chirp, MatchesFftFit) {
  fftpulse::Propagator p({1 << 14, 0.25});
  for (const auto& pulse : {preset_fast(), preset_tuned()}) {
    const double fitted = fftpulse::fit_chirp(p, pulse.temporal_fwhm_ps, pulse.spectral_fwhm_nm,
                                              pulse.center_wavelength_nm);
    EXPECT_NEAR(chirp_from_widths(pulse), fitted, 0.02 * fitted);
  }
}

TEST(Broadening, ZeroLengthKeepsWidth) {
  auto p = with_measured_chirp(preset_fast(), ChirpSign::worst_case, fiber_km(0));
  EXPECT_DOUBLE_EQ(broadened_fwhm(p, fiber_km(0)), 40.0);
}

TEST(Broadening, FourierLimitedPoints) {
  const auto p = fourier_limited_pulse(40.0, 1550.12);
  EXPECT_NEAR(broadened_fwhm(p, fiber_km(50)), 85.0, 0.05 * 85.0);
  EXPECT_NEAR(broadened_fwhm(p, fiber_km(100)), 150.0, 0.05 * 150.0);
  EXPECT_NEAR(broadened_fwhm(p, fiber_km(200)), 300.0, 0.05 * 300.0);
  EXPECT_NEAR(broadened_fwhm(p, fiber_km(100)), 155.5468, 1e-3);
}

TEST(Broadening, ChirpedFastLaser) {
  const auto p = with_measured_chirp(preset_fast(), ChirpSign::worst_case, fiber_km(100));
  const double w = broadened_fwhm(p, fiber_km(100));
  EXPECT_NEAR(w, 323.83, 0.01);
  EXPECT_GT(w, 2.0 * broadened_fwhm(fourier_limited_pulse(40.0, 1550.12), fiber_km(100)));
  EXPECT_NEAR(broadened_fwhm(p, fiber_km(200)), 612.52, 0.01);
}

TEST(Broadening, TunedLaserBelowBinAt105km) {
  const auto p = with_measured_chirp(preset_tuned(), ChirpSign::worst_case, fiber_km(105));
  EXPECT_NEAR(broadened_fwhm(p, fiber_km(105)), 271.64, 0.01);
  EXPECT_LT(broadened_fwhm(p, fiber_km(105)), 400.0);
}

TEST(Broadening, WorstCaseSignBroadensMost) {
  for (double z : {10.0, 50.0, 100.0}) {
    const auto worst = with_measured_chirp(preset_fast(), ChirpSign::worst_case, fiber_km(z));
    const auto pos = with_measured_chirp(preset_fast(), ChirpSign::positive, fiber_km(z));
    EXPECT_GT(broadened_fwhm(worst, fiber_km(z)), broadened_fwhm(pos, fiber_km(z)));
  }
}

TEST(Broadening, UnchirpedIdentity) {
  const auto p = fourier_limited_pulse(40.0, 1550.12);
  for (double z = 0; z <= 250; z += 12.5) {
    const double ld = dispersion_length_km(p, fiber_km(z));
    EXPECT_NEAR(broadened_fwhm(p, fiber_km(z)), 40.0 * std::sqrt(1.0 + (z / ld) * (z / ld)), 1e-9);
  }
}

TEST(Broadening, ScalingInvariance) {
  // z -> a z together with L_D -> a L_D (T0 -> sqrt(a) T0).
  for (double a : {0.25, 2.0, 7.0}) {
    for (double z : {5.0, 60.0, 180.0}) {
      PulseSpec p = fourier_limited_pulse(40.0, 1550.12);
      p.chirp = -1.3;
      PulseSpec q = p;
      q.temporal_fwhm_ps *= std::sqrt(a);
      const double r1 = broadened_fwhm(p, fiber_km(z)) / p.temporal_fwhm_ps;
      const double r2 = broadened_fwhm(q, fiber_km(a * z)) / q.temporal_fwhm_ps;
      EXPECT_NEAR(r1, r2, 1e-12);
    }
  }
}

TEST(Broadening, MonotoneWhenCBeta2NonNegative) {
  PulseSpec p = preset_fast();
  p.chirp = -chirp_from_widths(p);  // beta2 < 0
  double last = 0.0;
  for (double z = 0; z <= 250; z += 5) {
    const double w = broadened_fwhm(p, fiber_km(z));
    EXPECT_GE(w, last);
    last = w;
  }
}

TEST(Broadening, MatchesFftPropagation) {
  fftpulse::Propagator prop({1 << 15, 0.5});
  const double beta2 = gvd_beta2(17.0, 1550.12);
  for (const auto& preset : {preset_fast(), preset_tuned()}) {
    const auto p = with_measured_chirp(preset, ChirpSign::worst_case, fiber_km(1));
    for (int i = 0; i < 25; ++i) {
      const double z = 250.0 * i / 24.0;
      const double closed = broadened_fwhm(p, fiber_km(z));
      const double numeric = prop.output_fwhm(p.temporal_fwhm_ps, p.chirp, beta2, z);
      EXPECT_NEAR(closed, numeric, 0.02 * numeric) << "z=" << z;
    }
  }
}

TEST(Leakage, DeltaPulse) {
  const auto l = bin_leakage_probability(0.0, TimeBinGrid{});
  EXPECT_EQ(l.adjacent_bin, 0.0);
  EXPECT_EQ(l.neighbor_period, 0.0);
}

TEST(Leakage, QuadratureValues) {
  const auto l400 = bin_leakage_probability(400.0, TimeBinGrid{});
  EXPECT_NEAR(l400.adjacent_bin, 0.11930991038486, 1e-9);
  EXPECT_NEAR(l400.neighbor_period, 0.11930991038486, 1e-9);
  const auto l300 = bin_leakage_probability(300.0, TimeBinGrid{});
  EXPECT_NEAR(l300.adjacent_bin, 0.05822027139112, 1e-9);
  EXPECT_LT(l300.adjacent_bin, l400.adjacent_bin);
}

TEST(Leakage, MonotoneAndBounded) {
  // The nearest-bin slice grows up to ~2 bin widths of FWHM; past that the
  // pulse spills beyond the truncated neighbors and only the total keeps growing.
  double last = 0.0, last_total = 0.0;
  for (double w = 0; w <= 3000; w += 25) {
    const auto l = bin_leakage_probability(w, TimeBinGrid{});
    if (w <= 800) EXPECT_GE(l.adjacent_bin, last) << w;
    EXPECT_GE(1.0 - l.own_bin, last_total) << w;
    EXPECT_LE(l.adjacent_bin, 0.5);
    EXPECT_LE(l.neighbor_period, 0.5);
    last = l.adjacent_bin;
    last_total = 1.0 - l.own_bin;
  }
  EXPECT_THROW(bin_leakage_probability(-1.0, TimeBinGrid{}), std::invalid_argument);
}

TEST(Visibility, Floor) {
  EXPECT_EQ(visibility_error_floor(1.0), 0.0);
  EXPECT_NEAR(visibility_error_floor(0.9973), 0.00135, 1e-12);
  EXPECT_EQ(visibility_error_floor(0.0), 0.5);
  EXPECT_THROW(visibility_error_floor(1.01), std::invalid_argument);
  EXPECT_THROW(visibility_error_floor(-0.1), std::invalid_argument);
}

TEST(Interference, Ports) {
  auto a = interference_click_probabilities(0.0, 1.0);
  EXPECT_EQ(a.correct, 1.0);
  EXPECT_EQ(a.error, 0.0);
  auto b = interference_click_probabilities(std::numbers::pi, 1.0);
  EXPECT_NEAR(b.correct, 0.0, 1e-15);
  EXPECT_NEAR(b.error, 1.0, 1e-15);
  EXPECT_NEAR(interference_click_probabilities(0.0, 0.9973).error, 0.00135, 1e-12);
  for (double phi = -7; phi < 7; phi += 0.37) {
    for (double v : {0.0, 0.5, 0.9973, 1.0}) {
      auto p = interference_click_probabilities(phi, v);
      EXPECT_NEAR(p.correct + p.error, 1.0, 1e-15);
      EXPECT_GE(p.error, 0.0);
      EXPECT_LE(p.error, 1.0);
    }
  }
}

TEST(Specs, Validation) {
  EXPECT_NO_THROW(preset_fast().validate());
  EXPECT_THROW((PulseSpec{0.0, 0.17, 1550, 0}).validate(), std::invalid_argument);
  EXPECT_THROW((PulseSpec{40.0, 0.01, 1550, 0}).validate(), std::domain_error);
  EXPECT_THROW((FiberSpec{-1, 0, 17}).validate(), std::invalid_argument);
  EXPECT_NO_THROW((FiberSpec{0, 0, 0}).validate());
  EXPECT_THROW((TimeBinGrid{0.0}).validate(), std::invalid_argument);
  EXPECT_EQ(TimeBinGrid{}.qubit_period_ps(), 800.0);
}
