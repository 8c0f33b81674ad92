#pragma once

// One-decoy finite-key bounds and the secret key length.
//
// Notation: mu1 = signal (larger), mu2 = decoy. Counts are rescaled per
// intensity, n+-_k = e^{mu_k} / p_k * (n_k +- delta), with a Hoeffding
// delta = sqrt(N / 2 * ln(21 / eps_sec)) over the basis total N.

#include "qkdlink/distillation/bits.hpp"
#include "qkdlink/monitor_stats.hpp"
#include "qkdlink/transmitter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace qkdlink::distill {

struct DistillationParams {
  std::uint32_t ec_block_size = 8192;
  double ec_efficiency_target = 1.05;
  double eps_sec = 1e-9;
  double eps_cor = 1e-9;
  std::uint8_t cascade_passes = 4;
  /// Error rate Bob assumes to size the first Cascade block.
  double cascade_q_prior = 0.03;
  /// false: statistical penalties and the constant epsilon terms are dropped.
  bool finite_size = true;
  /// Sessions abort before reconciliation above this raw QBER.
  double qber_abort = 0.11;

  void validate() const {
    if (ec_block_size == 0 || (ec_block_size & (ec_block_size - 1)))
      throw std::invalid_argument("DistillationParams: ec_block_size must be a power of two");
    if (!(ec_efficiency_target >= 1.0)) throw std::invalid_argument("DistillationParams: ec efficiency must be >= 1");
    if (!(eps_sec > 0.0 && eps_sec < 1.0) || !(eps_cor > 0.0 && eps_cor < 1.0))
      throw std::invalid_argument("DistillationParams: epsilons must lie in (0, 1)");
    if (cascade_passes == 0) throw std::invalid_argument("DistillationParams: need at least one Cascade pass");
    if (!(cascade_q_prior > 0.0 && cascade_q_prior < 0.5))
      throw std::invalid_argument("DistillationParams: cascade_q_prior must lie in (0, 0.5)");
  }
};

struct DecoyBounds {
  double s_z0_lower = 0.0;
  double s_z1_lower = 0.0;
  double s_x1_lower = 0.0;
  double v_x1_upper = 0.0;
  double phi_z_upper = 0.5;
  double gamma = 0.0;
  double lambda_ec = 0.0;
  std::uint64_t n_z = 0;
  /// false when the X statistics cannot support a phase-error bound.
  bool secure = false;
};

/// tau_n = sum_k p_k e^{-mu_k} mu_k^n / n!
inline double photon_number_weight(const EmissionConfig& e, int n) {
  double t = 0.0;
  for (auto k : {Intensity::signal, Intensity::decoy}) {
    const double mu = e.mu(k);
    t += e.p_intensity(k) * std::exp(-mu) * std::pow(mu, n) / std::tgamma(n + 1.0);
  }
  return t;
}

/// Statistical correction to the phase error rate.
inline double phase_penalty(double eps_sec, double b, double c, double d) {
  if (b <= 0.0 || b >= 1.0) return 0.0;
  const double cd = c * d;
  const double inner = (c + d) / (cd * (1.0 - b) * b) * (21.0 * 21.0) / (eps_sec * eps_sec);
  const double g2 = (c + d) * (1.0 - b) * b / (cd * std::log(2.0)) * std::log2(inner);
  return g2 > 0.0 ? std::sqrt(g2) : 0.0;
}

namespace detail {

struct Scaled {
  double signal_lo, signal_hi, decoy_lo, decoy_hi;
};

inline Scaled scale(double n_signal, double n_decoy, double total, const EmissionConfig& e,
                    const DistillationParams& p) {
  const double delta = p.finite_size && total > 0.0 ? std::sqrt(total / 2.0 * std::log(21.0 / p.eps_sec)) : 0.0;
  const double ws = std::exp(e.mu_signal) / e.p_intensity(Intensity::signal);
  const double wd = std::exp(e.mu_decoy) / e.p_intensity(Intensity::decoy);
  return {ws * std::max(0.0, n_signal - delta), ws * (n_signal + delta), wd * std::max(0.0, n_decoy - delta),
          wd * (n_decoy + delta)};
}

/// Vacuum and single-photon lower bounds for one basis.
inline std::pair<double, double> vacuum_and_single(const Scaled& n, const Scaled& m, const EmissionConfig& e) {
  const double mu1 = e.mu_signal, mu2 = e.mu_decoy;
  const double tau0 = photon_number_weight(e, 0), tau1 = photon_number_weight(e, 1);
  const double s0 = std::max(0.0, tau0 * (mu1 * n.decoy_lo - mu2 * n.signal_hi) / (mu1 - mu2));
  const double s0_upper = 2.0 * tau0 * m.decoy_hi;
  const double s1 = tau1 * mu1 / (mu2 * (mu1 - mu2)) *
                    (n.decoy_lo - (mu2 * mu2) / (mu1 * mu1) * n.signal_hi -
                     (mu1 * mu1 - mu2 * mu2) / (mu1 * mu1) * s0_upper / tau0);
  return {s0, std::max(0.0, s1)};
}

}  // namespace detail

inline DecoyBounds decoy_bounds(const MonitorStats& stats, const EmissionConfig& emission,
                                const DistillationParams& params, double lambda_ec = 0.0) {
  if (emission.mu_signal == emission.mu_decoy)
    throw std::invalid_argument("decoy_bounds: degenerate decoy (mu_signal == mu_decoy)");
  const auto& sig = stats[Intensity::signal];
  const auto& dec = stats[Intensity::decoy];
  const auto tot = stats.total();
  const auto d = [](std::uint64_t v) { return static_cast<double>(v); };

  DecoyBounds b;
  b.lambda_ec = lambda_ec;
  b.n_z = tot.n_z;

  const auto nz = detail::scale(d(sig.n_z), d(dec.n_z), d(tot.n_z), emission, params);
  const auto mz = detail::scale(d(sig.m_z), d(dec.m_z), d(tot.m_z), emission, params);
  const auto [s_z0, s_z1] = detail::vacuum_and_single(nz, mz, emission);
  b.s_z0_lower = std::min(s_z0, d(tot.n_z));
  b.s_z1_lower = std::min(s_z1, d(tot.n_z) - b.s_z0_lower);

  const auto nx = detail::scale(d(sig.n_x), d(dec.n_x), d(tot.n_x), emission, params);
  const auto mx = detail::scale(d(sig.m_x), d(dec.m_x), d(tot.m_x), emission, params);
  b.s_x1_lower = detail::vacuum_and_single(nx, mx, emission).second;
  const double tau1 = photon_number_weight(emission, 1);
  b.v_x1_upper = std::max(0.0, tau1 / (emission.mu_signal - emission.mu_decoy) * (mx.signal_hi - mx.decoy_lo));

  if (b.s_x1_lower <= 0.0 || b.s_z1_lower <= 0.0) {
    b.phi_z_upper = 0.5;
    b.secure = false;
    return b;
  }
  const double ratio = std::min(1.0, b.v_x1_upper / b.s_x1_lower);
  b.gamma = params.finite_size ? phase_penalty(params.eps_sec, ratio, b.s_x1_lower, b.s_z1_lower) : 0.0;
  b.phi_z_upper = std::clamp(ratio + b.gamma, 0.0, 0.5);
  b.secure = true;
  return b;
}

/// l = floor(s_z0 + s_z1 (1 - h(phi)) - lambda_EC - 6 log2(19/eps_sec) - log2(2/eps_cor)), at least 0.
inline std::uint64_t key_length(const DecoyBounds& b, const DistillationParams& params) {
  if (!b.secure) return 0;
  const double phi = std::clamp(b.phi_z_upper, 0.0, 0.5);
  double l = b.s_z0_lower + b.s_z1_lower * (1.0 - binary_entropy(phi)) - b.lambda_ec;
  if (params.finite_size) l -= 6.0 * std::log2(19.0 / params.eps_sec) + std::log2(2.0 / params.eps_cor);
  if (!(l > 0.0)) return 0;
  return static_cast<std::uint64_t>(std::floor(l));
}

}  // namespace qkdlink::distill
