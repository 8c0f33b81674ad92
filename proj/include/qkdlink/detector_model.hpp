#pragma once

// Receiver topology (tunable basis splitter, Z arm, unbalanced X
// interferometer) and free-running avalanche detectors, simulated photon by
// photon. This is the reference path; slot_model.hpp holds the analytic
// expectations and the event-driven sampler used for long sessions.

#include "qkdlink/optics.hpp"
#include "qkdlink/random.hpp"
#include "qkdlink/transmitter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkdlink {

struct ReceiverSpec {
  double p_x_bob = 0.5;          // X-arm fraction of the tunable splitter
  double loss_z_arm_db = 2.17;
  double loss_x_arm_db = 3.52;
  double visibility = 0.9973;
  double phase_bob = 0.0;

  void validate() const {
    if (!(p_x_bob >= 0.0 && p_x_bob <= 1.0)) throw std::invalid_argument("ReceiverSpec: p_x_bob must lie in [0, 1]");
    if (!(loss_z_arm_db >= 0.0 && loss_x_arm_db >= 0.0))
      throw std::invalid_argument("ReceiverSpec: arm losses must be >= 0");
    if (!(visibility >= 0.0 && visibility <= 1.0))
      throw std::invalid_argument("ReceiverSpec: visibility must lie in [0, 1]");
  }
};

struct DetectorSpec {
  double efficiency = 0.20;
  double dark_rate_cps = 0.0;
  double dead_time_us = 0.0;
  double jitter_sigma_ps = 64.0;  // 150 ps FWHM
  std::string temperature_label;
  /// Simple afterpulse model: after each click, with this probability one
  /// extra click fires an exponential delay after the dead time ends.
  double afterpulse_probability = 0.0;
  double afterpulse_time_constant_us = 1.0;

  void validate() const {
    if (!(efficiency >= 0.0 && efficiency <= 1.0)) throw std::invalid_argument("DetectorSpec: efficiency must lie in [0, 1]");
    if (!(dark_rate_cps >= 0.0)) throw std::invalid_argument("DetectorSpec: dark_rate must be >= 0");
    if (!(dead_time_us >= 0.0)) throw std::invalid_argument("DetectorSpec: dead_time must be >= 0");
    if (!(jitter_sigma_ps >= 0.0)) throw std::invalid_argument("DetectorSpec: jitter_sigma must be >= 0");
    if (!(afterpulse_probability >= 0.0 && afterpulse_probability <= 1.0))
      throw std::invalid_argument("DetectorSpec: afterpulse_probability must lie in [0, 1]");
    if (!(afterpulse_time_constant_us > 0.0))
      throw std::invalid_argument("DetectorSpec: afterpulse time constant must be > 0");
  }
};

/// Dark-count presets for the two cooling regimes of the deployed NFADs.
inline DetectorSpec detector_preset(const std::string& temperature_label) {
  DetectorSpec d;
  d.temperature_label = temperature_label;
  if (temperature_label == "-50C") {
    d.dark_rate_cps = 2000.0;
  } else if (temperature_label == "-85C") {
    d.dark_rate_cps = 77.0;
  } else {
    throw std::invalid_argument("unknown detector preset '" + temperature_label + "'");
  }
  return d;
}

enum class Detector : std::uint8_t { z = 0, x = 1 };
enum class Bin : std::uint8_t { early = 0, late = 1 };
enum class Port : std::uint8_t { constructive = 0, destructive = 1 };

/// A recorded click. time_offset is measured from the start of `bin`;
/// X clicks use the same slot geometry and additionally carry the
/// interferometer output port.
struct DetectionEvent {
  std::uint64_t qubit_index = 0;
  Bin bin = Bin::early;
  Detector detector = Detector::z;
  double time_offset_ps = 0.0;
  Port port = Port::constructive;

  double time_in_slot_ps(const optics::TimeBinGrid& grid) const {
    return (bin == Bin::late ? grid.bin_width_ps : 0.0) + time_offset_ps;
  }

  friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

/// Builds an event from a position inside slot `index`; the bin follows from
/// the offset so the two can never disagree.
inline DetectionEvent make_event(std::uint64_t index, double time_in_slot_ps, Detector detector,
                                 Port port, const optics::TimeBinGrid& grid) {
  const double w = grid.bin_width_ps;
  DetectionEvent e;
  e.qubit_index = index;
  e.detector = detector;
  e.port = port;
  e.bin = time_in_slot_ps < w ? Bin::early : Bin::late;
  e.time_offset_ps = e.bin == Bin::late ? time_in_slot_ps - w : time_in_slot_ps;
  return e;
}

/// Time from event a to event b in ps (exact for distant slot indices).
inline double time_between_ps(const DetectionEvent& a, const DetectionEvent& b,
                              const optics::TimeBinGrid& grid) {
  const double slots = b.qubit_index >= a.qubit_index
                           ? static_cast<double>(b.qubit_index - a.qubit_index)
                           : -static_cast<double>(a.qubit_index - b.qubit_index);
  return slots * grid.qubit_period_ps() + (b.time_in_slot_ps(grid) - a.time_in_slot_ps(grid));
}

/// Ordering used for merged event streams: (qubit_index, time, detector).
inline bool event_precedes(const DetectionEvent& a, const DetectionEvent& b) {
  if (a.qubit_index != b.qubit_index) return a.qubit_index < b.qubit_index;
  if (a.bin != b.bin) return a.bin < b.bin;
  if (a.time_offset_ps != b.time_offset_ps) return a.time_offset_ps < b.time_offset_ps;
  return a.detector < b.detector;
}

/// Everything between Alice's output and Bob's detectors.
struct LinkSpec {
  optics::PulseSpec pulse;
  optics::FiberSpec fiber;
  double extra_attenuation_db = 0.0;
  ReceiverSpec receiver;
  DetectorSpec detector_z;
  DetectorSpec detector_x;
  optics::TimeBinGrid grid;
  /// Lumped encoder / timing imperfection: each Z-arm photon lands around
  /// the wrong bin center with this probability.
  double device_qz_floor = 0.0;

  const DetectorSpec& detector(Detector d) const { return d == Detector::z ? detector_z : detector_x; }

  void validate() const {
    pulse.validate();
    fiber.validate();
    receiver.validate();
    detector_z.validate();
    detector_x.validate();
    grid.validate();
    if (!(extra_attenuation_db >= 0.0)) throw std::invalid_argument("LinkSpec: extra attenuation must be >= 0");
    if (!(device_qz_floor >= 0.0 && device_qz_floor < 0.5))
      throw std::invalid_argument("LinkSpec: device_qz_floor must lie in [0, 0.5)");
  }
};

/// 10^(-(loss + extra) / 10). An infinite loss gives exactly 0.
inline double channel_transmittance(const optics::FiberSpec& fiber, double extra_attenuation_db) {
  if (!(fiber.total_loss_db >= 0.0) || !(extra_attenuation_db >= 0.0))
    throw std::invalid_argument("channel_transmittance: losses must be >= 0");
  const double total = fiber.total_loss_db + extra_attenuation_db;
  return std::isinf(total) ? 0.0 : std::pow(10.0, -total / 10.0);
}

inline double db_to_transmittance(double db) { return std::pow(10.0, -db / 10.0); }

/// Photon-level propagation of one emitted slot. Returns every photon that
/// reaches a detector, including those displaced into neighboring slots;
/// detector saturation is applied afterwards (first_click_per_slot and
/// apply_dead_time). `drift` is the environmental phase added to the
/// interferometer mismatch.
inline std::vector<DetectionEvent> propagate(const AmplitudePattern& pattern, std::uint64_t slot_index,
                                             const LinkSpec& link, Rng& rng, double drift = 0.0) {
  std::vector<DetectionEvent> out;
  const double t = channel_transmittance(link.fiber, link.extra_attenuation_db);
  if (pattern.total() <= 0.0 || t <= 0.0) return out;

  const auto& grid = link.grid;
  const double w = grid.bin_width_ps;
  const double period = grid.qubit_period_ps();
  const double sigma_z = optics::arrival_sigma_ps(link.pulse, link.fiber, link.detector_z.jitter_sigma_ps);
  const double sigma_x = optics::arrival_sigma_ps(link.pulse, link.fiber, link.detector_x.jitter_sigma_ps);
  const double survive_z = db_to_transmittance(link.receiver.loss_z_arm_db) * link.detector_z.efficiency;
  const double survive_x = db_to_transmittance(link.receiver.loss_x_arm_db) * link.detector_x.efficiency;
  const bool coherent = pattern.mu_early > 0.0 && pattern.mu_late > 0.0;
  const double p_error =
      coherent ? optics::interference_click_probabilities(
                     pattern.relative_phase - link.receiver.phase_bob + drift, link.receiver.visibility)
                     .error
               : 0.5;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Places a photon at slot-relative time `rel` (may fall outside the slot).
  auto place = [&](double rel, Detector detector, Port port) {
    const double slot_shift = std::floor(rel / period);
    if (slot_shift < 0.0 && static_cast<double>(slot_index) < -slot_shift) return;
    const auto index = static_cast<std::uint64_t>(static_cast<std::int64_t>(slot_index) +
                                                  static_cast<std::int64_t>(slot_shift));
    out.push_back(make_event(index, rel - slot_shift * period, detector, port, grid));
  };

  for (int b = 0; b < 2; ++b) {
    const double mu = b == 0 ? pattern.mu_early : pattern.mu_late;
    if (mu <= 0.0) continue;
    std::poisson_distribution<long> arrivals(mu * t);
    const long n = arrivals(rng);
    for (long i = 0; i < n; ++i) {
      if (unit(rng) < link.receiver.p_x_bob) {
        if (unit(rng) >= survive_x) continue;
        const double y = sigma_x * normal(rng);
        if (std::abs(y) >= 3.0 * w) continue;  // beyond nearest-neighbor ISI
        const Port port = unit(rng) < p_error ? Port::destructive : Port::constructive;
        place(w + y, Detector::x, port);
      } else {
        if (unit(rng) >= survive_z) continue;
        int nominal = b;
        if (unit(rng) < link.device_qz_floor) nominal = 1 - b;
        const double x = sigma_z * normal(rng);
        if (std::abs(x) >= 1.5 * w) continue;
        place((nominal + 0.5) * w + x, Detector::z, Port::constructive);
      }
    }
  }
  return out;
}

/// Poisson dark counts spread uniformly over slots [slot_begin, slot_end).
inline void inject_dark_counts(std::uint64_t slot_begin, std::uint64_t slot_end, Detector detector,
                               const DetectorSpec& spec, const optics::TimeBinGrid& grid, Rng& rng,
                               std::vector<DetectionEvent>& out) {
  if (slot_end <= slot_begin || spec.dark_rate_cps <= 0.0) return;
  const double slots = static_cast<double>(slot_end - slot_begin);
  const double duration_s = slots * grid.qubit_period_ps() * 1e-12;
  std::poisson_distribution<long> count(spec.dark_rate_cps * duration_s);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const long n = count(rng);
  for (long i = 0; i < n; ++i) {
    const double pos = unit(rng) * slots;
    const auto index = std::min(slot_end - 1, slot_begin + static_cast<std::uint64_t>(pos));
    const double in_slot = std::min((pos - std::floor(pos)) * grid.qubit_period_ps(),
                                    std::nextafter(grid.qubit_period_ps(), 0.0));
    const Port port = unit(rng) < 0.5 ? Port::destructive : Port::constructive;
    out.push_back(make_event(index, in_slot, detector, detector == Detector::x ? port : Port::constructive, grid));
  }
}

/// Keeps, per detector, only the earliest event of each slot. Input must be
/// sorted with event_precedes.
inline std::vector<DetectionEvent> first_click_per_slot(const std::vector<DetectionEvent>& events) {
  std::vector<DetectionEvent> out;
  out.reserve(events.size());
  std::array<std::uint64_t, 2> last_slot{UINT64_MAX, UINT64_MAX};
  for (const auto& e : events) {
    auto& last = last_slot[static_cast<int>(e.detector)];
    if (last == e.qubit_index) continue;
    last = e.qubit_index;
    out.push_back(e);
  }
  return out;
}

/// Keeps the earliest event of each slot across both detectors, which is what
/// Bob announces.
inline std::vector<DetectionEvent> first_event_per_slot(const std::vector<DetectionEvent>& events) {
  std::vector<DetectionEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    if (!out.empty() && out.back().qubit_index == e.qubit_index) continue;
    out.push_back(e);
  }
  return out;
}

/// Non-paralyzable dead time per detector. Input must be time-ordered.
inline std::vector<DetectionEvent> apply_dead_time(const std::vector<DetectionEvent>& events,
                                                   double dead_time_z_us, double dead_time_x_us,
                                                   const optics::TimeBinGrid& grid) {
  std::vector<DetectionEvent> out;
  out.reserve(events.size());
  constexpr std::size_t kNone = SIZE_MAX;
  std::array<std::size_t, 2> last_accepted{kNone, kNone};
  const std::array<double, 2> dead_ps{dead_time_z_us * 1e6, dead_time_x_us * 1e6};
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (i > 0 && time_between_ps(events[i - 1], e, grid) < 0.0)
      throw std::invalid_argument("apply_dead_time: events are not time-ordered");
    const int d = static_cast<int>(e.detector);
    if (last_accepted[d] != kNone && time_between_ps(out[last_accepted[d]], e, grid) < dead_ps[d]) continue;
    last_accepted[d] = out.size();
    out.push_back(e);
  }
  return out;
}

inline std::vector<DetectionEvent> apply_dead_time(const std::vector<DetectionEvent>& events, double dead_time_us,
                                                   const optics::TimeBinGrid& grid = {}) {
  return apply_dead_time(events, dead_time_us, dead_time_us, grid);
}

/// Photon-level reference run over slots [begin, end): propagate every slot,
/// add dark counts, then per-detector saturation (dead time, then the
/// earliest surviving photon per slot). Returns per-detector clicks, sorted; no cross-detector merge.
template <typename PhaseFn>
std::vector<DetectionEvent> simulate_photon_level(const SymbolStream& symbols, std::uint64_t begin,
                                                  std::uint64_t end, const LinkSpec& link, Rng& rng,
                                                  PhaseFn&& drift_at_slot) {
  std::vector<DetectionEvent> raw;
  const auto& emission = symbols.config();
  for (std::uint64_t k = begin; k < end; ++k) {
    const auto pattern = encode(symbols.symbol_at(k), emission);
    auto photons = propagate(pattern, k, link, rng, drift_at_slot(k));
    for (const auto& p : photons)
      if (p.qubit_index >= begin && p.qubit_index < end) raw.push_back(p);
  }
  inject_dark_counts(begin, end, Detector::z, link.detector_z, link.grid, rng, raw);
  inject_dark_counts(begin, end, Detector::x, link.detector_x, link.grid, rng, raw);
  std::sort(raw.begin(), raw.end(), event_precedes);
  if (link.detector_z.dead_time_us > 0.0 || link.detector_x.dead_time_us > 0.0)
    raw = apply_dead_time(raw, link.detector_z.dead_time_us, link.detector_x.dead_time_us, link.grid);
  return first_click_per_slot(raw);
}

inline std::vector<DetectionEvent> simulate_photon_level(const SymbolStream& symbols, std::uint64_t begin,
                                                         std::uint64_t end, const LinkSpec& link, Rng& rng) {
  return simulate_photon_level(symbols, begin, end, link, rng, [](std::uint64_t) { return 0.0; });
}

}  // namespace qkdlink
