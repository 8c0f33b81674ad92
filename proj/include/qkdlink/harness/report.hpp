#pragma once

// run_scenario: one full session for a scenario file, summarized as a
// LinkReport, plus the artifact writers behind `qkdlink run`.

#include "qkdlink/harness/config.hpp"
#include "qkdlink/harness/csv.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace qkdlink::harness {

enum ExitCode : int { kExitOk = 0, kExitNoKey = 2, kExitTransport = 3, kExitConfig = 4 };

struct LinkReport {
  std::string name;
  std::string status = "ok";
  std::string message;
  bool expect_key = true;

  double q_z = 0.0;
  double phi_z_raw = 0.0;
  double phi_z_upper = 0.5;
  double skr_bps = 0.0;
  double sifted_rate = 0.0;  // sifted Z bits / s
  std::uint64_t lambda_ec = 0;
  std::uint64_t key_length = 0;
  double elapsed_s = 0.0;
  std::uint64_t slots = 0;
  BasisCounts signal;
  BasisCounts decoy;
  double s_z0 = 0.0;
  double s_z1 = 0.0;
  /// lambda_ec / (n_z h(q_z)); 0 when q_z = 0.
  double ec_efficiency = 0.0;
  bool qber_abort = false;

  double broadened_fwhm_ps = 0.0;
  double leakage_adjacent = 0.0;
  double leakage_neighbor = 0.0;
  double device_qz_floor = 0.0;

  std::uint64_t frames = 0;
  std::uint64_t cascade_rounds = 0;

  std::uint64_t n_z() const { return signal.n_z + decoy.n_z; }
  std::uint64_t n_x() const { return signal.n_x + decoy.n_x; }

  int exit_code() const {
    if (status == "transport_failure") return kExitTransport;
    if (expect_key && (status != "ok" || key_length == 0)) return kExitNoKey;
    return kExitOk;
  }
};

struct ScenarioRun {
  LinkReport report;
  protocol::SessionResult session;
};

inline void fill_dispersion(LinkReport& r, const LinkSpec& link) {
  r.broadened_fwhm_ps = optics::broadened_fwhm(link.pulse, link.fiber);
  const auto leak = optics::bin_leakage_probability(r.broadened_fwhm_ps, link.grid);
  r.leakage_adjacent = leak.adjacent_bin;
  r.leakage_neighbor = leak.neighbor_period;
  r.device_qz_floor = link.device_qz_floor;
}

inline LinkReport summarize(const ScenarioConfig& c, const protocol::SessionResult& s) {
  LinkReport r;
  r.name = c.name;
  r.status = protocol::to_string(s.status);
  r.message = s.message;
  r.expect_key = c.expect_key;
  r.q_z = s.stats.q_z();
  r.phi_z_raw = s.stats.phi_raw();
  r.phi_z_upper = s.bounds.phi_z_upper;
  r.elapsed_s = s.stats.elapsed_time_s;
  r.slots = s.stats.elapsed_qubit_slots;
  r.signal = s.stats[Intensity::signal];
  r.decoy = s.stats[Intensity::decoy];
  r.lambda_ec = s.lambda_ec;
  r.key_length = s.complete() ? s.key_length : 0;
  r.skr_bps = s.complete() ? s.skr_bps : 0.0;
  r.sifted_rate = r.elapsed_s > 0.0 ? static_cast<double>(r.n_z()) / r.elapsed_s : 0.0;
  r.s_z0 = s.bounds.s_z0_lower;
  r.s_z1 = s.bounds.s_z1_lower;
  const double hq = r.q_z > 0.0 ? distill::binary_entropy(r.q_z) : 0.0;
  r.ec_efficiency = hq > 0.0 ? static_cast<double>(r.lambda_ec) / (static_cast<double>(r.n_z()) * hq) : 0.0;
  r.qber_abort = s.qber_abort;
  r.frames = s.frames;
  r.cascade_rounds = s.cascade_rounds;
  fill_dispersion(r, c.session.link);

  if (r.key_length > r.n_z() || r.skr_bps > r.sifted_rate)
    throw std::logic_error("report: secret key rate exceeds the sifted rate");
  return r;
}

inline ScenarioRun run_scenario(const ScenarioConfig& c) {
  c.validate();
  ScenarioRun run;
  run.session = protocol::run_session(c.session, c.transport_options());
  run.report = summarize(c, run.session);
  return run;
}

/// key = value lines in a fixed order; numbers round-trip exactly.
inline void write_report(std::ostream& out, const LinkReport& r) {
  auto line = [&](const char* key, const std::string& value) { out << std::left << std::setw(20) << key << "= " << value << '\n'; };
  line("scenario", r.name);
  line("status", r.status);
  if (!r.message.empty()) line("message", r.message);
  line("key_length", number(r.key_length));
  line("skr_bps", number(r.skr_bps));
  line("sifted_rate_bps", number(r.sifted_rate));
  line("elapsed_s", number(r.elapsed_s));
  line("qubit_slots", number(r.slots));
  line("q_z", number(r.q_z));
  line("phi_z_raw", number(r.phi_z_raw));
  line("phi_z_upper", number(r.phi_z_upper));
  line("qber_abort", r.qber_abort ? "true" : "false");
  line("lambda_ec", number(r.lambda_ec));
  line("ec_efficiency", number(r.ec_efficiency));
  line("s_z0_lower", number(r.s_z0));
  line("s_z1_lower", number(r.s_z1));
  for (auto [label, c] : {std::pair{"signal", &r.signal}, std::pair{"decoy", &r.decoy}}) {
    const std::string p = label;
    line((p + ".n_z").c_str(), number(c->n_z));
    line((p + ".m_z").c_str(), number(c->m_z));
    line((p + ".n_x").c_str(), number(c->n_x));
    line((p + ".m_x").c_str(), number(c->m_x));
  }
  line("broadened_fwhm_ps", number(r.broadened_fwhm_ps));
  line("leakage_adjacent", number(r.leakage_adjacent));
  line("leakage_neighbor", number(r.leakage_neighbor));
  line("device_qz_floor", number(r.device_qz_floor));
  line("frames", number(r.frames));
  line("cascade_rounds", number(r.cascade_rounds));
}

inline const std::vector<std::string>& report_csv_header() {
  static const std::vector<std::string> h{
      "scenario",   "status",       "key_length",  "skr_bps",    "sifted_rate_bps", "elapsed_s",
      "q_z",        "phi_z_raw",    "phi_z_upper", "lambda_ec",  "ec_efficiency",   "s_z0_lower",
      "s_z1_lower", "signal_n_z",   "signal_m_z",  "signal_n_x", "signal_m_x",      "decoy_n_z",
      "decoy_m_z",  "decoy_n_x",    "decoy_m_x",   "broadened_fwhm_ps", "leakage_adjacent", "device_qz_floor"};
  return h;
}

inline std::vector<std::string> report_csv_row(const LinkReport& r) {
  return {r.name,
          r.status,
          number(r.key_length),
          number(r.skr_bps),
          number(r.sifted_rate),
          number(r.elapsed_s),
          number(r.q_z),
          number(r.phi_z_raw),
          number(r.phi_z_upper),
          number(r.lambda_ec),
          number(r.ec_efficiency),
          number(r.s_z0),
          number(r.s_z1),
          number(r.signal.n_z),
          number(r.signal.m_z),
          number(r.signal.n_x),
          number(r.signal.m_x),
          number(r.decoy.n_z),
          number(r.decoy.m_z),
          number(r.decoy.n_x),
          number(r.decoy.m_x),
          number(r.broadened_fwhm_ps),
          number(r.leakage_adjacent),
          number(r.device_qz_floor)};
}

/// report.txt, report.csv, transcript.bin and the two final keys as hex.
inline void write_artifacts(const std::filesystem::path& dir, const ScenarioRun& run) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(dir / name, mode | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("report.txt");
    write_report(f, run.report);
  }
  {
    auto f = open("report.csv");
    write_csv_row(f, report_csv_header());
    write_csv_row(f, report_csv_row(run.report));
  }
  {
    auto f = open("transcript.bin", std::ios::out | std::ios::binary);
    f.write(reinterpret_cast<const char*>(run.session.transcript.data()),
            static_cast<std::streamsize>(run.session.transcript.size()));
  }
  open("alice_key.hex") << distill::to_hex(run.session.alice_key) << '\n';
  open("bob_key.hex") << distill::to_hex(run.session.bob_key) << '\n';
}

}  // namespace qkdlink::harness
