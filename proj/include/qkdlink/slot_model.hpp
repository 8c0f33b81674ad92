#pragma once

// Per-slot photon statistics of the receiver model.
//
// Given the patterns of slots k-1, k, k+1, the photons each detector can
// register inside slot k form independent Poisson "sources" (own pulse,
// nearest-neighbor leakage, dark counts), each with a known arrival-time
// window. From these:
//   * expected_rates() averages closed-form click / error probabilities over
//     the symbol alphabet (the oracle for Monte Carlo validation);
//   * DetectorProcess samples clicks exactly but event-driven: geometric
//     skipping with thinning over a bound on the per-slot intensity, so cost
//     scales with the number of clicks instead of the number of slots.

#include "qkdlink/detector_model.hpp"
#include "qkdlink/optics.hpp"
#include "qkdlink/random.hpp"
#include "qkdlink/transmitter.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace qkdlink {

struct PhotonSource {
  double mean = 0.0;
  double center_ps = 0.0;  // Gaussian center, slot-relative
  double lo_ps = 0.0;      // window: [center + lo, center + hi) or [lo, hi) if uniform
  double hi_ps = 0.0;
  bool uniform = false;
  Port port = Port::constructive;

  double window_begin() const { return uniform ? lo_ps : center_ps + lo_ps; }
  double window_end() const { return uniform ? hi_ps : center_ps + hi_ps; }
};

struct SlotSources {
  std::array<PhotonSource, 10> items{};
  int count = 0;

  void add(const PhotonSource& s) {
    if (s.mean > 0.0) items[static_cast<std::size_t>(count++)] = s;
  }
  double total() const {
    double t = 0.0;
    for (int i = 0; i < count; ++i) t += items[static_cast<std::size_t>(i)].mean;
    return t;
  }
  /// Sum of means whose window lies in [begin, end).
  double total_in(double begin, double end) const {
    double t = 0.0;
    for (int i = 0; i < count; ++i) {
      const auto& s = items[static_cast<std::size_t>(i)];
      if (s.window_begin() >= begin && s.window_end() <= end) t += s.mean;
    }
    return t;
  }
  double total_port(Port p) const {
    double t = 0.0;
    for (int i = 0; i < count; ++i)
      if (items[static_cast<std::size_t>(i)].port == p) t += items[static_cast<std::size_t>(i)].mean;
    return t;
  }
};

class SlotModel {
 public:
  explicit SlotModel(const LinkSpec& link) : link_(link) {
    link_.validate();
    const double t = channel_transmittance(link_.fiber, link_.extra_attenuation_db);
    const auto& rx = link_.receiver;
    w_ = link_.grid.bin_width_ps;
    c_z_ = t * (1.0 - rx.p_x_bob) * db_to_transmittance(rx.loss_z_arm_db) * link_.detector_z.efficiency;
    c_x_ = t * rx.p_x_bob * db_to_transmittance(rx.loss_x_arm_db) * link_.detector_x.efficiency;
    sigma_z_ = optics::arrival_sigma_ps(link_.pulse, link_.fiber, link_.detector_z.jitter_sigma_ps);
    sigma_x_ = optics::arrival_sigma_ps(link_.pulse, link_.fiber, link_.detector_x.jitter_sigma_ps);
    z_own_ = gaussian_mass(sigma_z_, -0.5 * w_, 0.5 * w_);
    z_leak_ = gaussian_mass(sigma_z_, 0.5 * w_, 1.5 * w_);
    x_own_ = gaussian_mass(sigma_x_, -w_, w_);
    x_leak_ = gaussian_mass(sigma_x_, w_, 3.0 * w_);
    dark_z_bin_ = link_.detector_z.dark_rate_cps * w_ * 1e-12;
    dark_x_window_ = link_.detector_x.dark_rate_cps * 2.0 * w_ * 1e-12;
  }

  const LinkSpec& link() const { return link_; }
  double sigma(Detector d) const { return d == Detector::z ? sigma_z_ : sigma_x_; }

  /// Sources for detector `d` inside one slot; prev / next may be null at the
  /// stream edges. `drift` adds to every X-symbol phase mismatch.
  SlotSources sources(Detector d, const AmplitudePattern* prev, const AmplitudePattern& own,
                      const AmplitudePattern* next, double drift) const {
    SlotSources out;
    const double w = w_;
    if (d == Detector::z) {
      const auto own_nu = nominal_bins(own);
      const double prev_late = prev ? nominal_bins(*prev)[1] : 0.0;
      const double next_early = next ? nominal_bins(*next)[0] : 0.0;
      // early bin [0, w)
      out.add({c_z_ * own_nu[0] * z_own_, 0.5 * w, -0.5 * w, 0.5 * w});
      out.add({c_z_ * own_nu[1] * z_leak_, 1.5 * w, -1.5 * w, -0.5 * w});
      out.add({c_z_ * prev_late * z_leak_, -0.5 * w, 0.5 * w, 1.5 * w});
      out.add({dark_z_bin_, 0.0, 0.0, w, true});
      // late bin [w, 2w)
      out.add({c_z_ * own_nu[1] * z_own_, 1.5 * w, -0.5 * w, 0.5 * w});
      out.add({c_z_ * own_nu[0] * z_leak_, 0.5 * w, 0.5 * w, 1.5 * w});
      out.add({c_z_ * next_early * z_leak_, 2.5 * w, -1.5 * w, -0.5 * w});
      out.add({dark_z_bin_, 0.0, w, 2.0 * w, true});
      return out;
    }
    auto add_x = [&](const AmplitudePattern& p, double mass, double center, double lo, double hi) {
      const double mean = c_x_ * p.total() * mass;
      const double pe = error_probability(p, drift);
      out.add({mean * (1.0 - pe), center, lo, hi, false, Port::constructive});
      out.add({mean * pe, center, lo, hi, false, Port::destructive});
    };
    add_x(own, x_own_, w, -w, w);
    if (prev) add_x(*prev, x_leak_, -w, w, 3.0 * w);
    if (next) add_x(*next, x_leak_, 3.0 * w, -3.0 * w, -w);
    out.add({0.5 * dark_x_window_, 0.0, 0.0, 2.0 * w, true, Port::constructive});
    out.add({0.5 * dark_x_window_, 0.0, 0.0, 2.0 * w, true, Port::destructive});
    return out;
  }

  /// Interferometer error-port probability for photons of pattern p.
  double error_probability(const AmplitudePattern& p, double drift) const {
    if (!(p.mu_early > 0.0 && p.mu_late > 0.0)) return 0.5;
    return optics::interference_click_probabilities(p.relative_phase - link_.receiver.phase_bob + drift,
                                                    link_.receiver.visibility)
        .error;
  }

  /// Upper bound on the total per-slot mean over all symbol neighborhoods.
  double max_total(Detector d, const EmissionConfig& emission) const {
    std::vector<AmplitudePattern> alphabet;
    for (auto intensity : {Intensity::signal, Intensity::decoy}) {
      alphabet.push_back(encode({0, Basis::z, 0, intensity}, emission));
      alphabet.push_back(encode({0, Basis::z, 1, intensity}, emission));
      alphabet.push_back(encode({0, Basis::x, 0, intensity}, emission));
    }
    alphabet.push_back(AmplitudePattern{});
    double best = 0.0;
    for (const auto& p : alphabet)
      for (const auto& o : alphabet)
        for (const auto& n : alphabet) best = std::max(best, sources(d, &p, o, &n, 0.0).total());
    return best;
  }

 private:
  std::array<double, 2> nominal_bins(const AmplitudePattern& p) const {
    const double f = link_.device_qz_floor;
    return {(1.0 - f) * p.mu_early + f * p.mu_late, (1.0 - f) * p.mu_late + f * p.mu_early};
  }

  LinkSpec link_;
  double w_ = 400.0;
  double c_z_ = 0.0, c_x_ = 0.0;
  double sigma_z_ = 0.0, sigma_x_ = 0.0;
  double z_own_ = 1.0, z_leak_ = 0.0, x_own_ = 1.0, x_leak_ = 0.0;
  double dark_z_bin_ = 0.0, dark_x_window_ = 0.0;
};

/// Closed-form per-slot probabilities conditioned on Alice's intensity.
struct IntensityRates {
  double slot_probability = 0.0;  // P(intensity)
  double z_click = 0.0;           // P(Z click | intensity), any Alice basis
  double x_click = 0.0;
  double z_sifted = 0.0;  // P(Alice Z and Z click | intensity)
  double z_error = 0.0;   // ... and the click disagrees with Alice's bit
  double x_monitor = 0.0;  // P(Alice X and X click | intensity)
  double x_error = 0.0;    // ... and the click is on the error port

  double q_z() const { return z_sifted > 0.0 ? z_error / z_sifted : 0.0; }
  double q_x() const { return x_monitor > 0.0 ? x_error / x_monitor : 0.0; }
};

struct ExpectedRates {
  std::array<IntensityRates, 2> by_intensity{};  // indexed by Intensity
  double qubit_rate_hz = 0.0;
  double z_click_rate = 0.0;  // clicks / s
  double x_click_rate = 0.0;
  double z_sifted_rate = 0.0;
  double x_monitor_rate = 0.0;
  double q_z = 0.0;
  double q_x = 0.0;

  const IntensityRates& operator[](Intensity i) const { return by_intensity[static_cast<std::size_t>(i)]; }
};

struct RateOptions {
  double drift = 0.0;
  bool dead_time_correction = false;
};

/// Expectations over random symbol neighborhoods (3 slots, 6 symbols each).
/// Z clicks follow the earliest-photon rule exactly (early beats late); the X
/// port of a multi-photon click is taken proportional to the port means.
/// Dead time is ignored unless dead_time_correction scales each detector's
/// rate by 1 / (1 + R tau).
inline ExpectedRates expected_rates(const SlotModel& model, const EmissionConfig& emission,
                                    const RateOptions& options = {}) {
  struct Kind {
    StateSymbol symbol;
    double probability;
    AmplitudePattern pattern;
  };
  std::vector<Kind> kinds;
  for (auto intensity : {Intensity::signal, Intensity::decoy}) {
    const double pi = emission.p_intensity(intensity);
    for (std::uint8_t bit : {0, 1}) {
      StateSymbol s{0, Basis::z, bit, intensity};
      kinds.push_back({s, pi * emission.p_z_alice * 0.5, encode(s, emission)});
    }
    StateSymbol x{0, Basis::x, 0, intensity};
    kinds.push_back({x, pi * (1.0 - emission.p_z_alice), encode(x, emission)});
  }

  ExpectedRates r;
  r.qubit_rate_hz = emission.qubit_rate_hz;
  const double w = model.link().grid.bin_width_ps;
  for (const auto& own : kinds) {
    auto& acc = r.by_intensity[static_cast<std::size_t>(own.symbol.intensity)];
    const double p_own = own.probability / emission.p_intensity(own.symbol.intensity);
    for (const auto& prev : kinds) {
      for (const auto& next : kinds) {
        const double p = p_own * prev.probability * next.probability;
        const auto zs = model.sources(Detector::z, &prev.pattern, own.pattern, &next.pattern, options.drift);
        const double e_early = zs.total_in(0.0, w);
        const double e_late = zs.total_in(w, 2.0 * w);
        const double p_early = -std::expm1(-e_early);
        const double p_late_only = std::exp(-e_early) * -std::expm1(-e_late);
        acc.z_click += p * (p_early + p_late_only);

        const auto xs = model.sources(Detector::x, &prev.pattern, own.pattern, &next.pattern, options.drift);
        const double lambda = xs.total();
        const double p_x = -std::expm1(-lambda);
        acc.x_click += p * p_x;

        if (own.symbol.basis == Basis::z) {
          acc.z_sifted += p * (p_early + p_late_only);
          acc.z_error += p * (own.symbol.bit == 0 ? p_late_only : p_early);
        } else {
          acc.x_monitor += p * p_x;
          if (lambda > 0.0) acc.x_error += p * p_x * xs.total_port(Port::destructive) / lambda;
        }
      }
    }
  }

  double z_rate = 0.0, x_rate = 0.0;
  for (auto intensity : {Intensity::signal, Intensity::decoy}) {
    auto& acc = r.by_intensity[static_cast<std::size_t>(intensity)];
    acc.slot_probability = emission.p_intensity(intensity);
    z_rate += acc.slot_probability * acc.z_click;
    x_rate += acc.slot_probability * acc.x_click;
  }
  z_rate *= emission.qubit_rate_hz;
  x_rate *= emission.qubit_rate_hz;
  double z_scale = 1.0, x_scale = 1.0;
  if (options.dead_time_correction) {
    const double tau_z = model.link().detector_z.dead_time_us * 1e-6;
    const double tau_x = model.link().detector_x.dead_time_us * 1e-6;
    z_scale = 1.0 / (1.0 + z_rate * tau_z);
    x_scale = 1.0 / (1.0 + x_rate * tau_x);
    for (auto& acc : r.by_intensity) {
      acc.z_click *= z_scale;
      acc.z_sifted *= z_scale;
      acc.z_error *= z_scale;
      acc.x_click *= x_scale;
      acc.x_monitor *= x_scale;
      acc.x_error *= x_scale;
    }
  }
  r.z_click_rate = z_rate * z_scale;
  r.x_click_rate = x_rate * x_scale;
  double sifted = 0.0, z_err = 0.0, monitor = 0.0, x_err = 0.0;
  for (const auto& acc : r.by_intensity) {
    sifted += acc.slot_probability * acc.z_sifted;
    z_err += acc.slot_probability * acc.z_error;
    monitor += acc.slot_probability * acc.x_monitor;
    x_err += acc.slot_probability * acc.x_error;
  }
  r.z_sifted_rate = sifted * emission.qubit_rate_hz;
  r.x_monitor_rate = monitor * emission.qubit_rate_hz;
  r.q_z = sifted > 0.0 ? z_err / sifted : 0.0;
  r.q_x = monitor > 0.0 ? x_err / monitor : 0.0;
  return r;
}

/// One free-running detector, sampled event by event. State (dead time,
/// pending afterpulse) carries over between run() calls, so a session can
/// advance in chunks and change the transmitter phase or drift in between.
class DetectorProcess {
 public:
  DetectorProcess(Detector which, const SlotModel& model, const EmissionConfig& emission, std::uint64_t seed)
      : which_(which), model_(&model), spec_(model.link().detector(which)), rng_(seed) {
    period_ = model.link().grid.qubit_period_ps();
    dead_ps_ = spec_.dead_time_us * 1e6;
    lambda_max_ = model.max_total(which, emission);
    p_max_ = -std::expm1(-lambda_max_);
  }

  Detector detector() const { return which_; }

  /// Appends clicks in slots [begin, end) in time order.
  void run(const SymbolStream& symbols, const EmissionConfig& emission, std::uint64_t begin, std::uint64_t end,
           double drift, std::vector<DetectionEvent>& out) {
    std::uint64_t k = begin;
    double from = 0.0;
    if (live_.slot >= begin) {
      k = live_.slot;
      from = live_.offset;
    }
    if (pending_ap_ && (pending_ap_->slot < k || (pending_ap_->slot == k && pending_ap_->offset < from)))
      pending_ap_.reset();

    while (k < end) {
      const bool ap_here = pending_ap_ && pending_ap_->slot == k;
      if (from > 0.0 || ap_here) {
        const double until = ap_here ? pending_ap_->offset : period_;
        const auto src = slot_sources(symbols, emission, k, drift);
        if (auto hit = earliest_in_window(src, from, until)) {
          record(k, hit->first, hit->second, out);
        } else if (ap_here) {
          record_afterpulse(k, until, out);
        } else {
          ++k;
          from = 0.0;
          continue;
        }
        k = live_.slot;
        from = live_.offset;
        continue;
      }
      const std::uint64_t limit = (pending_ap_ && pending_ap_->slot < end) ? pending_ap_->slot : end;
      std::uint64_t j = k;
      std::optional<SlotSources> accepted;
      while (p_max_ > 0.0 && j < limit) {
        std::geometric_distribution<std::uint64_t> gap(p_max_);
        const std::uint64_t g = gap(rng_);
        if (g >= limit - j) {
          j = limit;
          break;
        }
        j += g;
        auto src = slot_sources(symbols, emission, j, drift);
        const double p = -std::expm1(-src.total());
        if (unit_(rng_) * p_max_ < p) {
          accepted = src;
          break;
        }
        ++j;
      }
      if (!accepted) {
        k = limit;
        from = 0.0;
        continue;
      }
      const auto [time, port] = earliest_given_click(*accepted);
      record(j, time, port, out);
      k = live_.slot;
      from = live_.offset;
    }
  }

 private:
  struct SlotTime {
    std::uint64_t slot = 0;
    double offset = 0.0;
  };

  SlotTime advance(std::uint64_t slot, double offset, double delay_ps) const {
    const double total = offset + delay_ps;
    const double whole = std::floor(total / period_);
    SlotTime t{slot + static_cast<std::uint64_t>(whole), total - whole * period_};
    if (t.offset >= period_) {
      ++t.slot;
      t.offset = 0.0;
    }
    return t;
  }

  SlotSources slot_sources(const SymbolStream& symbols, const EmissionConfig& emission, std::uint64_t k,
                           double drift) const {
    const auto own = encode(symbols.symbol_at(k), emission);
    const auto next = encode(symbols.symbol_at(k + 1), emission);
    if (k == 0) return model_->sources(which_, nullptr, own, &next, drift);
    const auto prev = encode(symbols.symbol_at(k - 1), emission);
    return model_->sources(which_, &prev, own, &next, drift);
  }

  double draw_time(const PhotonSource& s) {
    if (s.uniform) return s.lo_ps + (s.hi_ps - s.lo_ps) * unit_(rng_);
    return s.center_ps + truncated_gaussian(rng_, model_->sigma(which_), s.lo_ps, s.hi_ps);
  }

  /// Earliest photon of a slot conditioned on at least one photon.
  std::pair<double, Port> earliest_given_click(const SlotSources& src) {
    const double lambda = src.total();
    // Zero-truncated Poisson by inversion.
    const double u = unit_(rng_) * -std::expm1(-lambda);
    double term = std::exp(-lambda) * lambda;
    double cumulative = term;
    long n = 1;
    while (cumulative < u && n < 1000) {
      ++n;
      term *= lambda / static_cast<double>(n);
      cumulative += term;
    }
    double best = INFINITY;
    Port port = Port::constructive;
    for (long i = 0; i < n; ++i) {
      double pick = unit_(rng_) * lambda;
      int idx = 0;
      for (; idx < src.count - 1; ++idx) {
        pick -= src.items[static_cast<std::size_t>(idx)].mean;
        if (pick < 0.0) break;
      }
      const auto& s = src.items[static_cast<std::size_t>(idx)];
      const double t = draw_time(s);
      if (t < best) {
        best = t;
        port = s.port;
      }
    }
    return {best, port};
  }

  /// Earliest photon inside [from, until) with no conditioning (partial slots).
  std::optional<std::pair<double, Port>> earliest_in_window(const SlotSources& src, double from, double until) {
    std::optional<std::pair<double, Port>> best;
    for (int i = 0; i < src.count; ++i) {
      const auto& s = src.items[static_cast<std::size_t>(i)];
      std::poisson_distribution<long> count(s.mean);
      const long n = count(rng_);
      for (long j = 0; j < n; ++j) {
        const double t = draw_time(s);
        if (t >= from && t < until && (!best || t < best->first)) best = std::make_pair(t, s.port);
      }
    }
    return best;
  }

  void record(std::uint64_t slot, double time, Port port, std::vector<DetectionEvent>& out) {
    out.push_back(make_event(slot, time, which_, which_ == Detector::x ? port : Port::constructive,
                             model_->link().grid));
    live_ = advance(slot, time, dead_ps_);
    const SlotTime slot_end{slot + 1, 0.0};
    const SlotTime dead_end = live_;
    if (live_.slot <= slot) live_ = slot_end;
    pending_ap_.reset();
    if (spec_.afterpulse_probability > 0.0 && unit_(rng_) < spec_.afterpulse_probability) {
      std::exponential_distribution<double> delay(1.0 / (spec_.afterpulse_time_constant_us * 1e6));
      SlotTime ap = advance(dead_end.slot, dead_end.offset, delay(rng_));
      if (ap.slot < live_.slot || (ap.slot == live_.slot && ap.offset < live_.offset)) ap = live_;
      pending_ap_ = ap;
    }
  }

  void record_afterpulse(std::uint64_t slot, double time, std::vector<DetectionEvent>& out) {
    const Port port = unit_(rng_) < 0.5 ? Port::destructive : Port::constructive;
    record(slot, time, port, out);
  }

  Detector which_;
  const SlotModel* model_;
  DetectorSpec spec_;
  Rng rng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  double period_ = 800.0;
  double dead_ps_ = 0.0;
  double lambda_max_ = 0.0;
  double p_max_ = 0.0;
  SlotTime live_{};
  std::optional<SlotTime> pending_ap_;
};

/// Bob's two detectors driven together.
class ReceiverProcess {
 public:
  ReceiverProcess(const SlotModel& model, const EmissionConfig& emission, std::uint64_t seed)
      : z_(Detector::z, model, emission, derive_seed(seed, "detector-z")),
        x_(Detector::x, model, emission, derive_seed(seed, "detector-x")) {}

  /// Per-detector clicks in [begin, end), merged in event_precedes order.
  std::vector<DetectionEvent> acquire(const SymbolStream& symbols, const EmissionConfig& emission,
                                      std::uint64_t begin, std::uint64_t end, double drift) {
    std::vector<DetectionEvent> z, x;
    z_.run(symbols, emission, begin, end, drift, z);
    x_.run(symbols, emission, begin, end, drift, x);
    std::vector<DetectionEvent> merged;
    merged.reserve(z.size() + x.size());
    std::merge(z.begin(), z.end(), x.begin(), x.end(), std::back_inserter(merged), event_precedes);
    return merged;
  }

 private:
  DetectorProcess z_;
  DetectorProcess x_;
};

}  // namespace qkdlink
