#pragma once

// Summary table over executed scenarios: link and detector settings next to
// the measured performance, one row per scenario in config order.

#include "qkdlink/harness/report.hpp"

#include <cstdio>
#include <ostream>

namespace qkdlink::harness {

struct TableRow {
  std::string scenario;
  double length_km = 0.0;
  double attenuation_db = 0.0;  // fiber plus extra attenuation
  double eta_data = 0.0;        // percent
  double tau_data_us = 0.0;
  double eta_mon = 0.0;
  double tau_mon_us = 0.0;
  std::string temperature;
  double p_x_bob = 0.0;
  std::uint64_t n = 0;
  double t_s = 0.0;
  double q_z = 0.0;    // percent
  double phi_z = 0.0;  // percent, measured
  double skr_kbps = 0.0;

  friend bool operator==(const TableRow&, const TableRow&) = default;
};

inline TableRow table_row(const ScenarioConfig& c, const LinkReport& r) {
  const auto& link = c.session.link;
  TableRow row;
  row.scenario = c.name;
  row.length_km = link.fiber.length_km;
  row.attenuation_db = link.fiber.total_loss_db + link.extra_attenuation_db;
  row.eta_data = 100.0 * link.detector_z.efficiency;
  row.tau_data_us = link.detector_z.dead_time_us;
  row.eta_mon = 100.0 * link.detector_x.efficiency;
  row.tau_mon_us = link.detector_x.dead_time_us;
  row.temperature = link.detector_z.temperature_label.empty() ? "-" : link.detector_z.temperature_label;
  row.p_x_bob = link.receiver.p_x_bob;
  row.n = r.n_z();
  row.t_s = r.elapsed_s;
  row.q_z = 100.0 * r.q_z;
  row.phi_z = 100.0 * r.phi_z_raw;
  row.skr_kbps = r.skr_bps / 1000.0;
  return row;
}

inline const std::vector<std::string>& table_header() {
  static const std::vector<std::string> h{"scenario", "L_km",      "att_db", "eta_data_pct", "tau_data_us",
                                          "eta_mon_pct", "tau_mon_us", "T",      "p_x_bob",      "n",
                                          "t_s",      "q_z_pct",   "phi_z_pct", "skr_kbps"};
  return h;
}

inline void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows) {
  write_csv_row(out, table_header());
  for (const auto& r : rows)
    write_csv_row(out, {r.scenario, number(r.length_km), number(r.attenuation_db), number(r.eta_data),
                        number(r.tau_data_us), number(r.eta_mon), number(r.tau_mon_us), r.temperature,
                        number(r.p_x_bob), number(r.n), number(r.t_s), number(r.q_z), number(r.phi_z),
                        number(r.skr_kbps)});
}

inline std::vector<TableRow> read_table_csv(std::istream& in) {
  const auto t = read_csv(in);
  if (t.header != table_header()) throw std::invalid_argument("table csv: unexpected header");
  std::vector<TableRow> rows;
  for (const auto& c : t.rows) {
    TableRow r;
    r.scenario = c[0];
    r.length_km = parse_number(c[1]);
    r.attenuation_db = parse_number(c[2]);
    r.eta_data = parse_number(c[3]);
    r.tau_data_us = parse_number(c[4]);
    r.eta_mon = parse_number(c[5]);
    r.tau_mon_us = parse_number(c[6]);
    r.temperature = c[7];
    r.p_x_bob = parse_number(c[8]);
    r.n = static_cast<std::uint64_t>(std::stoull(c[9]));
    r.t_s = parse_number(c[10]);
    r.q_z = parse_number(c[11]);
    r.phi_z = parse_number(c[12]);
    r.skr_kbps = parse_number(c[13]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Fixed-width text rendering, rounded for reading.
inline void write_table_text(std::ostream& out, const std::vector<TableRow>& rows) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s %7s %6s %6s %6s %6s %6s %5s %5s %8s %10s %6s %6s %8s\n", "scenario", "L(km)",
                "Att", "eta_d", "tau_d", "eta_m", "tau_m", "T", "pXB", "n", "t(s)", "q_z%", "phi_z%", "SKR(kbps)");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-22s %7.1f %6.1f %6.0f %6.0f %6.0f %6.0f %5s %5.2f %8llu %10.3g %6.2f %6.2f %8.3f\n",
                  r.scenario.c_str(), r.length_km, r.attenuation_db, r.eta_data, r.tau_data_us, r.eta_mon,
                  r.tau_mon_us, r.temperature.c_str(), r.p_x_bob, static_cast<unsigned long long>(r.n), r.t_s, r.q_z,
                  r.phi_z, r.skr_kbps);
    out << buf;
  }
}

}  // namespace qkdlink::harness
