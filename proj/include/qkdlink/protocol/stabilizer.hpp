#pragma once

// Phase drift of the interferometer pair and the dither-and-descend loop
// that keeps Alice's compensation phase on it.

#include "qkdlink/random.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace qkdlink::protocol {

/// Wraps to (-pi, pi].
inline double wrap_phase(double phi) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(phi, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

struct DriftConfig {
  double random_walk_sigma = 0.0;     // rad / sqrt(s)
  double diurnal_amplitude = 0.0;     // rad
  double diurnal_period_s = 86400.0;
  double initial_offset = 0.0;        // rad

  void validate() const {
    if (!(random_walk_sigma >= 0.0)) throw std::invalid_argument("DriftConfig: random_walk_sigma must be >= 0");
    if (!(diurnal_period_s > 0.0)) throw std::invalid_argument("DriftConfig: diurnal_period must be > 0");
    if (!std::isfinite(diurnal_amplitude) || !std::isfinite(initial_offset))
      throw std::invalid_argument("DriftConfig: non-finite drift parameter");
  }
};

struct StabilizerConfig {
  bool enabled = true;
  double dither_step = 0.05;  // rad
  double gain = 0.5;
  std::uint32_t update_block = 1000;  // X detections per error estimate
  DriftConfig drift;

  void validate() const {
    if (!(dither_step > 0.0)) throw std::invalid_argument("StabilizerConfig: dither_step must be > 0");
    if (!(gain > 0.0)) throw std::invalid_argument("StabilizerConfig: gain must be > 0");
    if (update_block == 0) throw std::invalid_argument("StabilizerConfig: update_block must be > 0");
    drift.validate();
  }
};

/// Environmental phase: a random walk plus a diurnal sinusoid. Queries must
/// come in non-decreasing time order; the walk advances with sigma*sqrt(dt).
class PhaseDrift {
 public:
  PhaseDrift(const DriftConfig& config, std::uint64_t seed) : config_(config), rng_(seed) { config_.validate(); }

  double at(double t) {
    if (t < t_) throw std::invalid_argument("PhaseDrift: time went backwards");
    if (t > t_ && config_.random_walk_sigma > 0.0) {
      std::normal_distribution<double> step(0.0, config_.random_walk_sigma * std::sqrt(t - t_));
      walk_ += step(rng_);
    }
    t_ = t;
    return config_.initial_offset + walk_ +
           config_.diurnal_amplitude * std::sin(2.0 * std::numbers::pi * t / config_.diurnal_period_s);
  }

  double time() const { return t_; }

 private:
  DriftConfig config_;
  Rng rng_;
  double t_ = 0.0;
  double walk_ = 0.0;
};

/// Dither-and-descend. Blocks alternate between center + dither and
/// center - dither; after each pair the center moves gain * dither toward
/// the side that showed the lower error rate.
class PhaseStabilizer {
 public:
  explicit PhaseStabilizer(const StabilizerConfig& config, double initial_phase = 0.0)
      : config_(config), center_(wrap_phase(initial_phase)) {
    config_.validate();
  }

  /// Phase Alice should apply for the block now starting.
  double setpoint() const {
    if (!config_.enabled) return center_;
    return wrap_phase(center_ + (plus_stage_ ? config_.dither_step : -config_.dither_step));
  }

  /// Feeds the error rate measured over the block just finished at
  /// setpoint(); returns the setpoint for the next block.
  double step(double measured_error) {
    ++blocks_;
    if (!config_.enabled) return center_;
    if (plus_stage_) {
      e_plus_ = measured_error;
      plus_stage_ = false;
    } else {
      const double move = config_.gain * config_.dither_step;
      if (e_plus_ < measured_error)
        center_ = wrap_phase(center_ + move);
      else if (measured_error < e_plus_)
        center_ = wrap_phase(center_ - move);
      plus_stage_ = true;
    }
    return setpoint();
  }

  double center() const { return center_; }
  std::uint64_t blocks() const { return blocks_; }
  const StabilizerConfig& config() const { return config_; }

 private:
  StabilizerConfig config_;
  double center_;
  bool plus_stage_ = true;
  double e_plus_ = 0.0;
  std::uint64_t blocks_ = 0;
};

}  // namespace qkdlink::protocol
