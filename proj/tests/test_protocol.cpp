#include "qkdlink/protocol/session.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace qkdlink;
using namespace qkdlink::protocol;

namespace {

/// 4.6 km / 9.4 dB link with -50 C detectors.
SessionConfig metro(std::uint64_t n = 80000) {
  SessionConfig c;
  c.block_target_n = n;
  c.link.fiber = {4.6, 9.4, 17.0};
  c.link.detector_z = detector_preset("-50C");
  c.link.detector_z.dead_time_us = 24;
  c.link.detector_x = detector_preset("-50C");
  c.link.detector_x.dead_time_us = 28;
  c.link.device_qz_floor = 0.01;
  c.emission.p_z_alice = 0.8;
  c.max_duration_s = 60;
  return c;
}

double analytic_error(double phase_error, double v) { return 0.5 * (1.0 - v * std::cos(phase_error)); }

}  // namespace

TEST(Phase, Wrap) {
  EXPECT_DOUBLE_EQ(wrap_phase(0.3), 0.3);
  EXPECT_DOUBLE_EQ(wrap_phase(std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_phase(-std::numbers::pi), std::numbers::pi, 1e-15);
  EXPECT_NEAR(wrap_phase(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(wrap_phase(-7.0), -7.0 + 2 * std::numbers::pi, 1e-12);
}

TEST(Drift, Deterministic) {
  PhaseDrift none({}, 1);
  EXPECT_EQ(none.at(0), 0.0);
  EXPECT_EQ(none.at(1e5), 0.0);
  DriftConfig d;
  d.diurnal_amplitude = 0.7;
  d.diurnal_period_s = 1000;
  PhaseDrift sine(d, 1);
  EXPECT_NEAR(sine.at(250), 0.7, 1e-12);
  EXPECT_THROW(sine.at(100), std::invalid_argument);
}

TEST(Drift, RandomWalkDiffusion) {
  DriftConfig d;
  d.random_walk_sigma = 0.01;
  constexpr int kRuns = 4000;
  const double t = 400.0;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < kRuns; ++i) {
    PhaseDrift p(d, derive_seed(77, "run-" + std::to_string(i)));
    double v = 0.0;
    for (int k = 1; k <= 8; ++k) v = p.at(t * k / 8);
    sum += v;
    sum2 += v * v;
  }
  const double var = sum2 / kRuns - (sum / kRuns) * (sum / kRuns);
  const double expected = 0.01 * 0.01 * t;
  // Sample variance of a normal has relative sd sqrt(2 / N).
  EXPECT_NEAR(var, expected, 4.0 * expected * std::sqrt(2.0 / kRuns));
}

TEST(Stabilizer, StaysPutAtOptimum) {
  PhaseStabilizer s(StabilizerConfig{}, 0.0);
  for (int i = 0; i < 200; ++i) {
    const double e = analytic_error(s.setpoint(), 1.0);
    s.step(e);
    EXPECT_LE(std::abs(s.center()), 0.05);
  }
}

TEST(Stabilizer, SymmetricErrorsGiveNoMove) {
  PhaseStabilizer s(StabilizerConfig{}, 0.4);
  for (int i = 0; i < 10; ++i) s.step(0.02);
  EXPECT_DOUBLE_EQ(s.center(), 0.4);
}

TEST(Stabilizer, ConvergesFromOffsetWithShotNoise) {
  const StabilizerConfig cfg;
  Rng rng(5);
  int converged = 0;
  for (int trial = 0; trial < 20; ++trial) {
    PhaseStabilizer s(cfg, std::numbers::pi / 8);
    for (int block = 0; block < 50; ++block) {
      std::binomial_distribution<int> errors(static_cast<int>(cfg.update_block), analytic_error(s.setpoint(), 0.9973));
      s.step(static_cast<double>(errors(rng)) / cfg.update_block);
    }
    // Floor plus the cost of dithering and one controller step.
    if (analytic_error(s.center(), 0.9973) <= analytic_error(0.0, 0.9973) + analytic_error(0.1, 1.0)) ++converged;
  }
  EXPECT_EQ(converged, 20);
}

TEST(Stabilizer, DisabledHoldsPhase) {
  StabilizerConfig cfg;
  cfg.enabled = false;
  PhaseStabilizer s(cfg, 1.0);
  EXPECT_DOUBLE_EQ(s.setpoint(), 1.0);
  EXPECT_DOUBLE_EQ(s.step(0.4), 1.0);
}

TEST(Sift, FlagsAndDuplicates) {
  EmissionConfig e;
  Transmitter tx(e, 9);
  AliceEngine alice(tx);
  ASSERT_TRUE(alice.handle(service::hello_frame()));
  std::vector<service::Announcement> ann;
  std::uint64_t idx = 0;
  int z_for_x = 0, z_for_z = 0;
  while (z_for_x < 3 || z_for_z < 3) {
    const auto s = tx.symbols().symbol_at(idx);
    if (s.basis == Basis::x && z_for_x < 3) {
      ann.push_back({idx, 0});
      ++z_for_x;
    } else if (s.basis == Basis::z && z_for_z < 3) {
      ann.push_back({idx, 0});
      ++z_for_z;
    }
    ++idx;
  }
  const auto reply = service::SiftReply::decode(*alice.handle(service::DetectionAnnounce{0, idx, ann}.encode()));
  ASSERT_EQ(reply.flags.size(), ann.size());
  for (std::size_t i = 0; i < ann.size(); ++i) {
    const auto s = tx.symbols().symbol_at(ann[i].qubit_index);
    EXPECT_EQ(bool(reply.flags[i] & service::SiftFlags::kKeep), s.basis == Basis::z);
    EXPECT_EQ(bool(reply.flags[i] & service::SiftFlags::kAliceX), s.basis == Basis::x);
    EXPECT_EQ(bool(reply.flags[i] & service::SiftFlags::kDecoy), s.intensity == Intensity::decoy);
  }
  EXPECT_EQ(alice.sifted_key().size(), 3u);

  const auto dup = alice.handle(service::DetectionAnnounce{idx, idx + 10, {{idx + 1, 0}, {idx + 1, 1}}}.encode());
  ASSERT_TRUE(dup);
  EXPECT_EQ(dup->type, service::MessageType::abort);
  EXPECT_TRUE(alice.finished());
}

TEST(Sift, ForcedPiPhaseFlipsMonitorOutcome) {
  SessionConfig c;
  c.link.fiber = {0, 0, 17};
  c.link.detector_z.jitter_sigma_ps = 0;
  c.link.detector_x.jitter_sigma_ps = 0;
  c.emission.phase_alice = std::numbers::pi;
  c.emission.p_z_alice = 0.5;
  Transmitter tx(c.emission, 3);
  QuantumLink q(c.link, tx, {}, 4);
  const auto clicks = first_event_per_slot(q.acquire(0, 100000));
  std::uint64_t n = 0, m = 0;
  for (const auto& e : clicks) {
    if (e.detector != Detector::x || tx.symbols().symbol_at(e.qubit_index).basis != Basis::x) continue;
    ++n;
    m += e.port == Port::destructive;
  }
  ASSERT_GT(n, 200u);
  const double p = (1.0 + c.link.receiver.visibility) / 2.0;
  EXPECT_NEAR(static_cast<double>(m) / n, p, 4.0 * std::sqrt(p * (1 - p) / n) + 1e-3);
}

TEST(Sift, NoiselessEarlyZeroCountsWithoutError) {
  SessionConfig c;
  c.block_target_n = 200;
  c.link.fiber = {0, 0, 17};
  c.link.detector_z.jitter_sigma_ps = 0;
  c.link.detector_x.jitter_sigma_ps = 0;
  c.stabilization.enabled = false;
  const auto r = run_session(c);
  ASSERT_TRUE(r.complete()) << r.message;
  EXPECT_GE(r.stats.total().n_z, 200u);
  EXPECT_EQ(r.stats.total().m_z, 0u);
  EXPECT_EQ(r.alice_sifted, r.bob_sifted);
}

TEST(Session, InfiniteLossTimesOutWithZeroCounts) {
  SessionConfig c;
  c.link.extra_attenuation_db = INFINITY;
  c.max_duration_s = 50;
  const auto r = run_session(c);
  EXPECT_EQ(r.status, SessionStatus::timeout);
  EXPECT_EQ(r.stats.total(), BasisCounts{});
  EXPECT_NEAR(r.stats.elapsed_time_s, 50.0, 1e-6);
}

TEST(Session, MetroBlockDistillsMatchingKeys) {
  const auto r = run_session(metro());
  ASSERT_TRUE(r.complete()) << r.message;
  EXPECT_TRUE(r.verified);
  EXPECT_EQ(r.alice_sifted.size(), r.bob_sifted.size());
  EXPECT_EQ(r.bob_corrected, r.alice_sifted);
  // Disagreement fraction equals m_z / n_z exactly.
  EXPECT_EQ(distill::hamming_distance(r.alice_sifted, r.bob_sifted), r.stats.total().m_z);
  EXPECT_EQ(r.stats.total().n_z, r.alice_sifted.size());
  const auto& s = r.stats[Intensity::signal];
  const auto& d = r.stats[Intensity::decoy];
  EXPECT_EQ(s.n_z + d.n_z, r.stats.total().n_z);
  EXPECT_EQ(s.m_x + d.m_x, r.stats.total().m_x);
  EXPECT_GT(r.key_length, 0u);
  EXPECT_EQ(r.alice_key, r.bob_key);
  EXPECT_EQ(r.alice_key.size(), r.key_length);
  EXPECT_GT(r.stabilizer_blocks, 0u);
  EXPECT_DOUBLE_EQ(r.skr_bps, r.key_length / r.stats.elapsed_time_s);
}

TEST(Session, ReplayIsByteIdentical) {
  const auto a = run_session(metro(5000));
  const auto b = run_session(metro(5000));
  ASSERT_TRUE(a.complete());
  EXPECT_EQ(a.stats, b.stats);
  EXPECT_EQ(a.transcript, b.transcript);
  EXPECT_EQ(a.alice_key, b.alice_key);
}

TEST(Session, LeakageMatchesTranscript) {
  const auto r = run_session(metro(5000));
  ASSERT_TRUE(r.complete());
  std::uint64_t parities = 0;
  service::FrameReader reader;
  std::size_t pos = 0;
  while (pos < r.transcript.size()) {
    const auto sender = r.transcript[pos++];
    const auto d = service::decode_frame(std::span(r.transcript).subspan(pos));
    pos += d.consumed;
    if (sender == static_cast<std::uint8_t>(service::Side::alice) &&
        d.frame.type == service::MessageType::cascade_parity_resp)
      parities += service::ParityResponse::decode(d.frame).parities.size();
  }
  EXPECT_EQ(parities, r.lambda_ec);
}

TEST(Session, SocketMatchesLoopback) {
  const auto loop = run_session(metro(5000));
  const auto sock = run_session(metro(5000), {TransportKind::socket, {}});
  ASSERT_TRUE(sock.complete()) << sock.message;
  EXPECT_EQ(loop.stats, sock.stats);
  EXPECT_EQ(loop.alice_key, sock.alice_key);
  EXPECT_EQ(loop.transcript, sock.transcript);
}

TEST(Session, LinkDropAbortsWithPartialStats) {
  const auto full = run_session(metro(5000));
  ASSERT_TRUE(full.complete());
  // Break the link a few frames into reconciliation.
  std::uint64_t before_cascade = 0;
  std::size_t pos = 0;
  while (pos < full.transcript.size()) {
    ++pos;
    const auto d = service::decode_frame(std::span(full.transcript).subspan(pos));
    pos += d.consumed;
    ++before_cascade;
    if (d.frame.type == service::MessageType::shuffle_seed) break;
  }
  TransportOptions t;
  t.loopback.fail_after_frames = before_cascade + 5;
  const auto r = run_session(metro(5000), t);
  EXPECT_EQ(r.status, SessionStatus::transport_failure);
  EXPECT_EQ(r.stats.total().n_z, full.stats.total().n_z);
  EXPECT_EQ(r.key_length, 0u);
}
