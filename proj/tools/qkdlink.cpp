// qkdlink: scenario runner.
//
//   qkdlink run --config configs/row1_metro.ini --out out/metro
//   qkdlink sweep-dispersion --out out
//   qkdlink stability --config configs/stability.ini --stabilizer off
//   qkdlink table --config configs/row1_metro.ini --config configs/row8_40db.ini
//   qkdlink selftest
//
// Exit codes: 0 ok, 2 no key where one was expected, 3 transport failure,
// 4 config or usage error.

#include "qkdlink/harness/config.hpp"
#include "qkdlink/harness/report.hpp"
#include "qkdlink/harness/stability.hpp"
#include "qkdlink/harness/sweep.hpp"
#include "qkdlink/harness/table.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace qkdlink;
using namespace qkdlink::harness;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string transport;
  std::string out;
};

ScenarioConfig load(const std::string& path, const Common& common) {
  auto c = load_scenario(path);
  if (common.seed) c.session.seed = *common.seed;
  if (common.transport == "socket") c.transport = protocol::TransportKind::socket;
  else if (common.transport == "loopback") c.transport = protocol::TransportKind::loopback;
  return c;
}

std::ofstream open_out(const std::string& dir, const char* name) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / name);
  if (!f) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
  return f;
}

int cmd_run(const std::string& config, const Common& common) {
  const auto c = load(config, common);
  const auto run = run_scenario(c);
  write_report(std::cout, run.report);
  if (!common.out.empty()) write_artifacts(common.out, run);
  return run.report.exit_code();
}

int cmd_sweep(const Common& common, double max_km, double step_km, double dispersion) {
  const auto sweep = sweep_dispersion(default_dispersion_presets(), z_grid(max_km, step_km), dispersion);
  if (common.out.empty()) {
    write_sweep_csv(std::cout, sweep);
  } else {
    auto f = open_out(common.out, "sweep_dispersion.csv");
    write_sweep_csv(f, sweep);
  }
  for (std::size_t i = 0; i < sweep.labels.size(); ++i)
    std::cerr << sweep.labels[i] << ": exceeds " << sweep.reference_ps << " ps at "
              << (std::isnan(sweep.crossing_km(i)) ? std::string("never") : number(sweep.crossing_km(i)) + " km")
              << '\n';
  return kExitOk;
}

int cmd_stability(const std::string& config, const Common& common, const std::string& stabilizer,
                  std::optional<double> hours) {
  auto c = load(config, common);
  if (stabilizer == "on") c.session.stabilization.enabled = true;
  if (stabilizer == "off") c.session.stabilization.enabled = false;
  if (hours) c.stability.duration_s = *hours * 3600.0;
  const auto series = stability_run(c);
  if (common.out.empty()) {
    write_stability_csv(std::cout, series);
  } else {
    auto f = open_out(common.out, "stability.csv");
    write_stability_csv(f, series);
  }
  std::fprintf(stderr, "intervals %zu  mean SKR %.1f bps  CV %.3f  failed %zu  max phi_z %.4f\n",
               series.intervals.size(), series.mean_skr(), series.skr_cv(), series.failed_intervals(),
               series.max_phi_raw());
  return kExitOk;
}

int cmd_table(const std::vector<std::string>& configs, const Common& common) {
  std::vector<ScenarioConfig> scenarios;
  for (const auto& p : configs) scenarios.push_back(load(p, common));
  std::vector<std::future<ScenarioRun>> jobs;
  for (const auto& c : scenarios) jobs.push_back(std::async(std::launch::async, [&c] { return run_scenario(c); }));

  std::vector<TableRow> rows;
  int code = kExitOk;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto run = jobs[i].get();
    rows.push_back(table_row(scenarios[i], run.report));
    const int c = run.report.exit_code();
    if (c == kExitTransport || (c == kExitNoKey && code == kExitOk)) code = c;
  }
  write_table_text(std::cout, rows);
  if (!common.out.empty()) {
    auto f = open_out(common.out, "table.csv");
    write_table_csv(f, rows);
  }
  return code;
}

int cmd_selftest() {
  int failures = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what.c_str());
    failures += ok ? 0 : 1;
  };

  const auto sweep = sweep_dispersion({default_dispersion_presets()[0]}, {50.0, 100.0, 200.0});
  const double want[] = {85.0, 150.0, 300.0};
  bool points = true;
  for (int i = 0; i < 3; ++i) points = points && std::abs(sweep.fwhm_ps[0][i] / want[i] - 1.0) <= 0.05;
  check(points, "Fourier-limited 40 ps pulse: " + number(sweep.fwhm_ps[0][0]) + " / " + number(sweep.fwhm_ps[0][1]) +
                    " / " + number(sweep.fwhm_ps[0][2]) + " ps at 50 / 100 / 200 km");

  const auto hello = service::encode_frame(service::hello_frame());
  check(hello.size() == 14 && service::get_u32_be(hello.data() + 10) == 0xA04DDDF2u, "HELLO frame checksum");

  ScenarioConfig c;
  c.name = "selftest";
  c.session.block_target_n = 20000;
  c.session.link.fiber = {4.6, 9.4, 17.0};
  c.session.link.device_qz_floor = 0.01;
  c.session.stabilization.enabled = false;
  c.session.distillation.finite_size = false;
  const auto run = run_scenario(c);
  check(run.session.complete() && run.session.alice_key == run.session.bob_key && !run.session.alice_key.empty(),
        "loopback session distills matching keys (" + number(run.report.key_length) + " bits)");
  return failures == 0 ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-bin BB84 link simulator and scenario runner"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool transport) {
    sub->add_option("--out", common.out, "Output directory for artifacts");
    sub->add_option("--seed", common.seed, "Override the scenario seed");
    if (transport)
      sub->add_option("--transport", common.transport, "Service channel transport")
          ->check(CLI::IsMember({"loopback", "socket"}));
  };

  std::string config;
  auto* run = app.add_subcommand("run", "Run one scenario end to end");
  run->add_option("--config", config, "Scenario file")->required();
  add_common(run, true);

  double max_km = 200.0, step_km = 5.0, dispersion = 17.0;
  auto* sweep = app.add_subcommand("sweep-dispersion", "Pulse width against fiber length for the laser presets");
  sweep->add_option("--max-km", max_km, "Longest fiber")->check(CLI::NonNegativeNumber);
  sweep->add_option("--step-km", step_km, "Grid step")->check(CLI::PositiveNumber);
  sweep->add_option("--dispersion", dispersion, "Fiber dispersion, ps/(nm km)");
  sweep->add_option("--out", common.out, "Output directory");

  std::string stabilizer = "config";
  std::optional<double> hours;
  auto* stability = app.add_subcommand("stability", "Long run under interferometer drift");
  stability->add_option("--config", config, "Scenario file")->required();
  stability->add_option("--stabilizer", stabilizer, "Override the phase loop")
      ->check(CLI::IsMember({"on", "off", "config"}));
  stability->add_option("--hours", hours, "Simulated duration")->check(CLI::PositiveNumber);
  add_common(stability, false);

  std::vector<std::string> configs;
  auto* table = app.add_subcommand("table", "Run scenarios and tabulate them");
  table->add_option("--config", configs, "Scenario files, in row order")->required();
  add_common(table, true);

  auto* selftest = app.add_subcommand("selftest", "Quick end-to-end checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, common);
    if (*sweep) return cmd_sweep(common, max_km, step_km, dispersion);
    if (*stability) return cmd_stability(config, common, stabilizer, hours);
    if (*table) return cmd_table(configs, common);
    if (*selftest) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const service::TransportError& e) {
    std::cerr << "transport failure: " << e.what() << '\n';
    return kExitTransport;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
