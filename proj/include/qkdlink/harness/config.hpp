#pragma once

// Scenario files: INI sections of key = value pairs, ';' or '#' comments.
// Unknown sections or keys are rejected so typos do not silently fall back
// to defaults. See configs/README.md for the full grammar.

#include "qkdlink/optics.hpp"
#include "qkdlink/protocol/session.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

namespace qkdlink::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StabilityOptions {
  double duration_s = 48.0 * 3600.0;
  /// Drift-clock time between consecutive control blocks.
  double block_interval_s = 60.0;
  double report_interval_s = 3600.0;

  void validate() const {
    if (!(duration_s > 0.0) || !(block_interval_s > 0.0) || !(report_interval_s > 0.0))
      throw std::invalid_argument("StabilityOptions: durations must be > 0");
    if (report_interval_s < block_interval_s)
      throw std::invalid_argument("StabilityOptions: report interval shorter than one block");
  }
};

struct ScenarioConfig {
  std::string name = "scenario";
  protocol::SessionConfig session;
  optics::ChirpSign chirp_sign = optics::ChirpSign::worst_case;
  protocol::TransportKind transport = protocol::TransportKind::loopback;
  double latency_s = 0.0;
  /// A run that distills no key is a failure (exit 2) only when this is set.
  bool expect_key = true;
  StabilityOptions stability;

  void validate() const {
    session.validate();
    stability.validate();
    if (!(latency_s >= 0.0)) throw std::invalid_argument("scenario: latency must be >= 0");
  }

  protocol::TransportOptions transport_options() const {
    protocol::TransportOptions t;
    t.kind = transport;
    t.loopback.latency_s = latency_s;
    return t;
  }
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError(key + ": not a number: '" + text + "'");
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  // Accept 8e4-style literals as long as they are exact integers.
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec == std::errc() && ptr == text.data() + text.size()) return v;
  const double d = parse_double(key, text);
  if (!(d >= 0.0) || d != std::floor(d) || d > 1.8e19)
    throw ConfigError(key + ": not a non-negative integer: '" + text + "'");
  return static_cast<std::uint64_t>(d);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "on" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "off" || text == "no" || text == "0") return false;
  throw ConfigError(key + ": not a boolean: '" + text + "'");
}

/// Section reader that remembers which keys were consumed.
class Section {
 public:
  Section(std::string name, const boost::property_tree::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  void num(const char* key, double& out) {
    if (auto v = raw(key)) out = parse_double(qualified(key), *v);
  }
  template <class U>
  void uint(const char* key, U& out) {
    if (auto v = raw(key)) {
      const auto x = parse_unsigned(qualified(key), *v);
      if (x > std::numeric_limits<U>::max()) throw ConfigError(qualified(key) + ": out of range");
      out = static_cast<U>(x);
    }
  }
  void flag(const char* key, bool& out) {
    if (auto v = raw(key)) out = parse_bool(qualified(key), *v);
  }
  std::optional<std::string> raw(const char* key) {
    seen_.insert(key);
    if (!tree_) return std::nullopt;
    auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return it->second.data();
  }
  std::string qualified(const std::string& key) const { return name_ + "." + key; }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& [key, value] : *tree_)
      if (!seen_.count(key)) throw ConfigError("unknown key '" + qualified(key) + "'");
  }

 private:
  std::string name_;
  const boost::property_tree::ptree* tree_;
  std::set<std::string> seen_;
};

inline void read_detector(Section s, DetectorSpec& d) {
  if (auto preset = s.raw("preset")) {
    try {
      d = detector_preset(*preset);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(s.qualified("preset") + ": " + e.what());
    }
  }
  s.num("efficiency", d.efficiency);
  s.num("dark_rate_cps", d.dark_rate_cps);
  s.num("dead_time_us", d.dead_time_us);
  s.num("jitter_sigma_ps", d.jitter_sigma_ps);
  s.num("afterpulse_probability", d.afterpulse_probability);
  s.num("afterpulse_time_constant_us", d.afterpulse_time_constant_us);
  s.reject_unknown();
}

}  // namespace detail

/// Parses a scenario. Every failure, syntax or semantic, is a ConfigError.
inline ScenarioConfig parse_scenario(std::istream& in, const std::string& origin = "<config>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  static const std::set<std::string> sections{"scenario",     "pulse",      "fiber",       "channel",
                                               "emission",     "receiver",   "detector_z",  "detector_x",
                                               "session",      "distillation", "stabilization", "stability"};
  for (const auto& [name, body] : tree) {
    if (!sections.count(name)) throw ConfigError(origin + ": unknown section [" + name + "]");
    if (!body.data().empty() && body.empty()) throw ConfigError(origin + ": key '" + name + "' outside a section");
  }
  auto section = [&](const char* name) {
    auto it = tree.find(name);
    return detail::Section(name, it == tree.not_found() ? nullptr : &it->second);
  };

  ScenarioConfig c;
  auto& s = c.session;
  auto& link = s.link;
  // Deployed-fiber default: the lumped device floor is on unless a file says otherwise.
  link.device_qz_floor = 0.01;

  try {
    {
      auto sec = section("scenario");
      if (auto v = sec.raw("name")) c.name = *v;
      auto seed = sec.raw("seed");
      if (!seed) throw ConfigError("scenario.seed is required");
      s.seed = detail::parse_unsigned("scenario.seed", *seed);
      sec.uint("session_id", s.session_id);
      if (auto v = sec.raw("transport")) {
        if (*v == "loopback") c.transport = protocol::TransportKind::loopback;
        else if (*v == "socket") c.transport = protocol::TransportKind::socket;
        else throw ConfigError("scenario.transport: expected loopback or socket, got '" + *v + "'");
      }
      sec.num("latency_s", c.latency_s);
      sec.flag("expect_key", c.expect_key);
      sec.reject_unknown();
    }
    {
      auto sec = section("pulse");
      auto& p = link.pulse;
      sec.num("temporal_fwhm_ps", p.temporal_fwhm_ps);
      sec.num("center_wavelength_nm", p.center_wavelength_nm);
      if (auto v = sec.raw("spectral_fwhm_nm")) {
        if (*v == "fourier") p.spectral_fwhm_nm = optics::transform_limited_spectral_fwhm(p.temporal_fwhm_ps, p.center_wavelength_nm);
        else p.spectral_fwhm_nm = detail::parse_double("pulse.spectral_fwhm_nm", *v);
      }
      if (auto v = sec.raw("chirp_sign")) c.chirp_sign = optics::parse_chirp_sign(*v);
      sec.reject_unknown();
    }
    {
      auto sec = section("fiber");
      sec.num("length_km", link.fiber.length_km);
      sec.num("loss_db", link.fiber.total_loss_db);
      sec.num("dispersion_ps_nm_km", link.fiber.dispersion_ps_nm_km);
      sec.reject_unknown();
    }
    {
      auto sec = section("channel");
      sec.num("extra_attenuation_db", link.extra_attenuation_db);
      sec.num("device_qz_floor", link.device_qz_floor);
      sec.num("bin_width_ps", link.grid.bin_width_ps);
      sec.reject_unknown();
    }
    {
      auto sec = section("emission");
      auto& e = s.emission;
      sec.num("mu_signal", e.mu_signal);
      sec.num("mu_decoy", e.mu_decoy);
      sec.num("p_z_alice", e.p_z_alice);
      sec.num("p_signal", e.p_signal);
      sec.num("qubit_rate_hz", e.qubit_rate_hz);
      sec.num("phase_alice", e.phase_alice);
      sec.num("extinction_floor", e.extinction_floor);
      sec.reject_unknown();
    }
    {
      auto sec = section("receiver");
      auto& r = link.receiver;
      sec.num("p_x_bob", r.p_x_bob);
      sec.num("loss_z_arm_db", r.loss_z_arm_db);
      sec.num("loss_x_arm_db", r.loss_x_arm_db);
      sec.num("visibility", r.visibility);
      sec.num("phase_bob", r.phase_bob);
      sec.reject_unknown();
    }
    detail::read_detector(section("detector_z"), link.detector_z);
    detail::read_detector(section("detector_x"), link.detector_x);
    {
      auto sec = section("session");
      sec.uint("block_target_n", s.block_target_n);
      sec.num("max_duration_s", s.max_duration_s);
      sec.num("initial_chunk_s", s.initial_chunk_s);
      sec.uint("target_events_per_chunk", s.target_events_per_chunk);
      sec.reject_unknown();
    }
    {
      auto sec = section("distillation");
      auto& d = s.distillation;
      sec.uint("ec_block_size", d.ec_block_size);
      sec.num("ec_efficiency_target", d.ec_efficiency_target);
      sec.num("eps_sec", d.eps_sec);
      sec.num("eps_cor", d.eps_cor);
      sec.uint("cascade_passes", d.cascade_passes);
      sec.num("cascade_q_prior", d.cascade_q_prior);
      sec.flag("finite_size", d.finite_size);
      sec.num("qber_abort", d.qber_abort);
      sec.reject_unknown();
    }
    {
      auto sec = section("stabilization");
      auto& st = s.stabilization;
      sec.flag("enabled", st.enabled);
      sec.num("dither_step", st.dither_step);
      sec.num("gain", st.gain);
      sec.uint("update_block", st.update_block);
      sec.num("drift_random_walk_sigma", st.drift.random_walk_sigma);
      sec.num("drift_diurnal_amplitude", st.drift.diurnal_amplitude);
      sec.num("drift_diurnal_period_s", st.drift.diurnal_period_s);
      sec.num("drift_initial_offset", st.drift.initial_offset);
      sec.reject_unknown();
    }
    {
      auto sec = section("stability");
      double hours = -1.0;
      sec.num("duration_h", hours);
      if (hours >= 0.0) c.stability.duration_s = hours * 3600.0;
      sec.num("block_interval_s", c.stability.block_interval_s);
      sec.num("report_interval_s", c.stability.report_interval_s);
      sec.reject_unknown();
    }
    link.pulse = optics::with_measured_chirp(link.pulse, c.chirp_sign, link.fiber);
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return c;
}

inline ScenarioConfig parse_scenario_text(const std::string& text, const std::string& origin = "<config>") {
  std::istringstream in(text);
  return parse_scenario(in, origin);
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  return parse_scenario(in, path);
}

}  // namespace qkdlink::harness
