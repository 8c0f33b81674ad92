#pragma once

// Long-run operation under interferometer drift. Each control block is a
// real acquisition of update_block monitor events; consecutive blocks sit
// block_interval_s apart on the drift clock, so 48 h of drift costs only the
// slots the blocks themselves need. Per interval the key length uses the
// error-correction leak f n h(q_z) instead of running Cascade.

#include "qkdlink/harness/config.hpp"
#include "qkdlink/harness/csv.hpp"
#include "qkdlink/protocol/quantum_link.hpp"

#include <cmath>
#include <ostream>
#include <vector>

namespace qkdlink::harness {

struct StabilityInterval {
  double t_end_h = 0.0;
  double drift = 0.0;  // environment phase at the last block
  double phase = 0.0;  // Alice's compensation at the last block
  double q_z = 0.0;
  double phi_z_raw = 0.0;
  double phi_z_upper = 0.5;
  std::uint64_t n_z = 0;
  std::uint64_t key_length = 0;
  double acquisition_s = 0.0;
  double skr_bps = 0.0;
  bool qber_abort = false;

  bool failed() const { return key_length == 0; }
};

struct StabilitySeries {
  std::vector<StabilityInterval> intervals;

  double mean_skr() const {
    if (intervals.empty()) return 0.0;
    double s = 0.0;
    for (const auto& i : intervals) s += i.skr_bps;
    return s / static_cast<double>(intervals.size());
  }
  /// Population standard deviation over mean.
  double skr_cv() const {
    const double m = mean_skr();
    if (intervals.empty() || m <= 0.0) return INFINITY;
    double v = 0.0;
    for (const auto& i : intervals) v += (i.skr_bps - m) * (i.skr_bps - m);
    return std::sqrt(v / static_cast<double>(intervals.size())) / m;
  }
  std::size_t failed_intervals() const {
    std::size_t n = 0;
    for (const auto& i : intervals) n += i.failed() ? 1 : 0;
    return n;
  }
  double max_phi_raw() const {
    double m = 0.0;
    for (const auto& i : intervals) m = std::max(m, i.phi_z_raw);
    return m;
  }
};

inline StabilitySeries stability_run(const ScenarioConfig& c) {
  c.validate();
  const auto& cfg = c.session;
  const auto& opts = c.stability;
  const auto& params = cfg.distillation;
  const auto& st = cfg.stabilization;

  protocol::Transmitter tx(cfg.emission, derive_seed(cfg.seed, "alice-symbols"));
  protocol::QuantumLink link(cfg.link, tx, st.drift, derive_seed(cfg.seed, "channel"));
  protocol::PhaseStabilizer stabilizer(st, cfg.emission.phase_alice);
  tx.set_phase(stabilizer.setpoint());

  const double rate = cfg.emission.qubit_rate_hz;
  const auto expected = expected_rates(link.model(), cfg.emission);
  if (!(expected.x_monitor_rate > 0.0)) throw std::invalid_argument("stability_run: no monitor events expected");
  // Chunks of about a quarter block keep the overshoot past update_block small.
  const double chunk_slots = std::max(1.0, 0.25 * st.update_block * rate / expected.x_monitor_rate);

  const auto blocks_per_interval =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(opts.report_interval_s / opts.block_interval_s)));
  const auto intervals =
      static_cast<std::uint64_t>(std::llround(opts.duration_s / (opts.block_interval_s * blocks_per_interval)));

  StabilitySeries series;
  std::uint64_t slot = 0;
  std::uint64_t block_index = 0;
  for (std::uint64_t k = 0; k < intervals; ++k) {
    MonitorStats stats;
    StabilityInterval out;
    for (std::uint64_t b = 0; b < blocks_per_interval; ++b, ++block_index) {
      const double t = static_cast<double>(block_index) * opts.block_interval_s;
      std::uint64_t block_n = 0, block_m = 0;
      while (block_n < st.update_block) {
        const auto end = slot + static_cast<std::uint64_t>(chunk_slots);
        for (const auto& e : first_event_per_slot(link.acquire_at(slot, end, t))) {
          const auto s = tx.symbols().symbol_at(e.qubit_index);
          const auto bob = e.detector == Detector::z ? Basis::z : Basis::x;
          if (s.basis != bob) continue;
          auto& counts = stats[s.intensity];
          if (bob == Basis::z) {
            ++counts.n_z;
            counts.m_z += (e.bin == Bin::early ? 0 : 1) != s.bit ? 1 : 0;
          } else {
            const bool error = e.port == Port::destructive;
            ++counts.n_x;
            counts.m_x += error ? 1 : 0;
            ++block_n;
            block_m += error ? 1 : 0;
          }
        }
        stats.elapsed_qubit_slots += end - slot;
        slot = end;
      }
      out.drift = link.last_drift();
      out.phase = tx.phase();
      tx.set_phase(stabilizer.step(static_cast<double>(block_m) / static_cast<double>(block_n)));
    }
    stats.elapsed_time_s = static_cast<double>(stats.elapsed_qubit_slots) / rate;

    out.t_end_h = static_cast<double>(block_index) * opts.block_interval_s / 3600.0;
    out.q_z = stats.q_z();
    out.phi_z_raw = stats.phi_raw();
    out.n_z = stats.total().n_z;
    out.acquisition_s = stats.elapsed_time_s;
    const double leak = std::ceil(params.ec_efficiency_target * static_cast<double>(out.n_z) *
                                  distill::binary_entropy(std::min(out.q_z, 0.5)));
    const auto bounds = distill::decoy_bounds(stats, cfg.emission, params, leak);
    out.phi_z_upper = bounds.phi_z_upper;
    out.key_length = distill::key_length(bounds, params);
    if (out.q_z > params.qber_abort || out.phi_z_raw > params.qber_abort) {
      out.qber_abort = true;
      out.key_length = 0;
    }
    out.skr_bps = static_cast<double>(out.key_length) / out.acquisition_s;
    series.intervals.push_back(out);
  }
  return series;
}

inline void write_stability_csv(std::ostream& out, const StabilitySeries& s) {
  write_csv_row(out, {"t_h", "drift_rad", "phase_rad", "q_z", "phi_z_raw", "phi_z_upper", "n_z", "key_length",
                      "acquisition_s", "skr_bps", "qber_abort"});
  for (const auto& i : s.intervals)
    write_csv_row(out, {number(i.t_end_h), number(i.drift), number(i.phase), number(i.q_z), number(i.phi_z_raw),
                        number(i.phi_z_upper), number(i.n_z), number(i.key_length), number(i.acquisition_s),
                        number(i.skr_bps), i.qber_abort ? "1" : "0"});
}

}  // namespace qkdlink::harness
