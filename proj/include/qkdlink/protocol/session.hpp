#pragma once

// One key-distillation session: Bob's driver engine, the request channel it
// talks through, and run_session tying both engines to a transport.
//
// Bob -> Alice, each a strict request / reply pair:
//   HELLO, SESSION_PARAMS,
//   { DETECTION_ANNOUNCE -> SIFT_REPLY, [STABILIZER_NOTE -> ack] }*,
//   SHUFFLE_SEED -> echo, { CASCADE_PARITY_REQ -> RESP }*,
//   VERIFY_HASH, PA_SEED -> KEY_ACK.
// ABORT is one-way, in either direction.

#include "qkdlink/distillation/cascade.hpp"
#include "qkdlink/distillation/decoy.hpp"
#include "qkdlink/distillation/toeplitz.hpp"
#include "qkdlink/monitor_stats.hpp"
#include "qkdlink/protocol/alice.hpp"
#include "qkdlink/protocol/quantum_link.hpp"
#include "qkdlink/service/transport.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

namespace qkdlink::protocol {

struct SessionConfig {
  std::uint64_t block_target_n = 80000;
  EmissionConfig emission;
  LinkSpec link;
  StabilizerConfig stabilization;
  distill::DistillationParams distillation;
  std::uint64_t seed = 1;
  std::uint64_t session_id = 1;
  /// Give up after this much simulated acquisition time.
  double max_duration_s = 3600.0;
  double initial_chunk_s = 0.01;
  std::uint32_t target_events_per_chunk = 1000;

  void validate() const {
    if (block_target_n == 0) throw std::invalid_argument("SessionConfig: block_target_n must be > 0");
    if (block_target_n > UINT32_MAX) throw std::invalid_argument("SessionConfig: block_target_n too large");
    emission.validate();
    link.validate();
    stabilization.validate();
    distillation.validate();
    if (!(max_duration_s > 0.0) || !(initial_chunk_s > 0.0))
      throw std::invalid_argument("SessionConfig: durations must be > 0");
    if (target_events_per_chunk == 0) throw std::invalid_argument("SessionConfig: target_events_per_chunk must be > 0");
  }
};

enum class SessionStatus { ok, timeout, verification_failed, protocol_error, transport_failure };

inline const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::ok: return "ok";
    case SessionStatus::timeout: return "timeout";
    case SessionStatus::verification_failed: return "verification_failed";
    case SessionStatus::protocol_error: return "protocol_error";
    case SessionStatus::transport_failure: return "transport_failure";
  }
  return "?";
}

struct SessionResult {
  SessionStatus status = SessionStatus::ok;
  std::string message;
  MonitorStats stats;
  distill::Bits alice_sifted;
  distill::Bits bob_sifted;
  distill::Bits bob_corrected;
  std::vector<Intensity> sifted_intensity;
  distill::DecoyBounds bounds;
  std::uint64_t lambda_ec = 0;
  std::uint64_t key_length = 0;
  distill::Bits alice_key;
  distill::Bits bob_key;
  double skr_bps = 0.0;
  bool verified = false;
  /// Reconciliation stopped because the error rates exceed the abort threshold.
  bool qber_abort = false;
  std::uint64_t cascade_rounds = 0;
  std::uint64_t cascade_first_block = 0;
  std::uint64_t stabilizer_blocks = 0;
  double final_phase = 0.0;
  std::uint64_t frames = 0;
  std::vector<std::uint8_t> transcript;

  bool complete() const { return status == SessionStatus::ok; }
};

class SessionAborted : public std::runtime_error {
 public:
  SessionAborted(SessionStatus status, const std::string& what) : std::runtime_error(what), status_(status) {}
  SessionStatus status() const { return status_; }

 private:
  SessionStatus status_;
};

/// Bob's view of the service channel.
class RequestChannel {
 public:
  virtual ~RequestChannel() = default;
  virtual Frame request(const Frame& f) = 0;
  virtual void notify(const Frame& f) = 0;
};

/// In-process pump: Bob's request is delivered to Alice's engine on the
/// same thread, in simulated time.
class LoopbackChannel : public RequestChannel {
 public:
  LoopbackChannel(service::LoopbackPair& pair, AliceEngine& alice) : pair_(pair), alice_(alice) {}

  Frame request(const Frame& f) override {
    pair_.bob->send(f);
    while (true) {
      if (auto reply = pair_.bob->receive()) return *reply;
      if (!pump_alice() && !pair_.link->advance_to_next_delivery())
        throw service::TransportError("loopback: request left unanswered");
    }
  }

  void notify(const Frame& f) override {
    pair_.bob->send(f);
    while (true) {
      if (pump_alice()) continue;
      const double before = pair_.link->now();
      if (!pair_.link->advance_to_next_delivery() || pair_.link->now() == before) break;
    }
  }

 private:
  bool pump_alice() {
    auto in = pair_.alice->receive();
    if (!in) return false;
    if (auto out = alice_.handle(*in)) pair_.alice->send(*out);
    return true;
  }

  service::LoopbackPair& pair_;
  AliceEngine& alice_;
};

/// Bob over a blocking stream endpoint; Alice serves on the far side.
class StreamChannel : public RequestChannel {
 public:
  explicit StreamChannel(service::Endpoint& ep) : ep_(ep) {}
  Frame request(const Frame& f) override {
    ep_.send(f);
    auto reply = ep_.receive();
    if (!reply) throw service::TransportError("stream: no reply");
    return *reply;
  }
  void notify(const Frame& f) override { ep_.send(f); }

 private:
  service::Endpoint& ep_;
};

/// Alice's serve loop for stream transports: answer frames until the
/// session ends or the link fails.
inline void serve_alice(AliceEngine& alice, service::Endpoint& ep) {
  try {
    while (!alice.finished()) {
      auto f = ep.receive();
      if (!f) continue;
      if (auto out = alice.handle(*f)) ep.send(*out);
    }
  } catch (const service::TransportError&) {
  } catch (const service::FrameError&) {
  }
}

class BobEngine {
 public:
  BobEngine(const SessionConfig& config, QuantumLink& quantum, RequestChannel& channel)
      : config_(config),
        quantum_(quantum),
        channel_(channel),
        stabilizer_(config.stabilization, config.emission.phase_alice),
        rng_(derive_seed(config.seed, "bob-protocol")) {}

  SessionResult run() {
    SessionResult r;
    try {
      handshake();
      acquire(r);
      distill_key(r);
    } catch (const SessionAborted& e) {
      r.status = e.status();
      r.message = e.what();
    } catch (const service::TransportError& e) {
      r.status = SessionStatus::transport_failure;
      r.message = e.what();
    } catch (const service::FrameError& e) {
      r.status = SessionStatus::protocol_error;
      r.message = e.what();
      abort_quietly(service::AbortReason::protocol_error, e.what());
    } catch (const service::PayloadError& e) {
      r.status = SessionStatus::protocol_error;
      r.message = e.what();
      abort_quietly(service::AbortReason::protocol_error, e.what());
    }
    r.stats = stats_;
    r.bob_sifted = bob_sifted_;
    r.sifted_intensity = intensity_;
    r.stabilizer_blocks = stabilizer_.blocks();
    r.final_phase = stabilizer_.center();
    return r;
  }

 private:
  Frame expect(const Frame& reply, MessageType type) {
    if (reply.type == MessageType::abort) {
      const auto note = service::AbortNote::decode(reply);
      throw SessionAborted(SessionStatus::protocol_error, "Alice aborted: " + note.text);
    }
    if (reply.type != type)
      throw SessionAborted(SessionStatus::protocol_error,
                           std::string("expected ") + service::to_string(type) + ", got " + service::to_string(reply.type));
    return reply;
  }

  Frame call(const Frame& f, MessageType reply_type) { return expect(channel_.request(f), reply_type); }

  void abort_quietly(service::AbortReason reason, const std::string& text) {
    try {
      channel_.notify(service::AbortNote{reason, text}.encode());
    } catch (...) {
    }
  }

  [[noreturn]] void abort(SessionStatus status, service::AbortReason reason, const std::string& text) {
    abort_quietly(reason, text);
    throw SessionAborted(status, text);
  }

  void handshake() {
    call(service::hello_frame(), MessageType::hello);
    const service::SessionRequest req{config_.session_id, config_.block_target_n, config_.distillation.ec_block_size,
                                      config_.distillation.cascade_passes};
    const auto reply = service::SessionReply::decode(call(req.encode(), MessageType::session_params));
    emission_ = config_.emission;
    emission_.mu_signal = reply.mu_signal;
    emission_.mu_decoy = reply.mu_decoy;
    emission_.p_z_alice = reply.p_z_alice;
    emission_.p_signal = reply.p_signal;
    emission_.qubit_rate_hz = reply.qubit_rate_hz;
    emission_.validate();
    if (config_.stabilization.enabled) send_setpoint(stabilizer_.setpoint());
  }

  void send_setpoint(double phase) {
    const auto ack = service::StabilizerNote::decode(
        call(service::StabilizerNote{static_cast<std::uint32_t>(stabilizer_.blocks()), phase}.encode(),
             MessageType::stabilizer_note));
    (void)ack;
  }

  void acquire(SessionResult& r) {
    const double rate = emission_.qubit_rate_hz;
    const auto max_slots = static_cast<std::uint64_t>(config_.max_duration_s * rate);
    double chunk_slots = std::max(1.0, config_.initial_chunk_s * rate);
    std::uint64_t slot = 0;
    std::uint64_t block_n = 0, block_m = 0;
    while (stats_.total().n_z < config_.block_target_n) {
      if (slot >= max_slots) {
        stats_.elapsed_qubit_slots = slot;
        stats_.elapsed_time_s = static_cast<double>(slot) / rate;
        abort(SessionStatus::timeout, service::AbortReason::timeout,
              "no block after " + std::to_string(config_.max_duration_s) + " s of acquisition");
      }
      const std::uint64_t end = std::min<std::uint64_t>(max_slots, slot + static_cast<std::uint64_t>(chunk_slots));
      const auto clicks = first_event_per_slot(quantum_.acquire(slot, end));

      service::DetectionAnnounce ann{slot, end, {}};
      ann.detections.reserve(clicks.size());
      for (const auto& e : clicks) ann.detections.push_back({e.qubit_index, static_cast<std::uint8_t>(e.detector)});
      const auto sift = service::SiftReply::decode(call(ann.encode(), MessageType::sift_reply));
      if (sift.flags.size() != clicks.size())
        abort(SessionStatus::protocol_error, service::AbortReason::protocol_error, "SIFT_REPLY: size mismatch");

      for (std::size_t i = 0; i < clicks.size(); ++i) {
        const auto flags = sift.flags[i];
        if (!(flags & service::SiftFlags::kKeep)) continue;
        const auto k = (flags & service::SiftFlags::kDecoy) ? Intensity::decoy : Intensity::signal;
        const auto& e = clicks[i];
        if (e.detector == Detector::z) {
          ++stats_[k].n_z;
          bob_sifted_.push_back(e.bin == Bin::early ? 0 : 1);
          intensity_.push_back(k);
        } else {
          const bool error = e.port == Port::destructive;
          ++stats_[k].n_x;
          stats_[k].m_x += error ? 1 : 0;
          ++block_n;
          block_m += error ? 1 : 0;
        }
      }
      slot = end;
      stats_.elapsed_qubit_slots = slot;
      stats_.elapsed_time_s = static_cast<double>(slot) / rate;

      if (config_.stabilization.enabled && block_n >= config_.stabilization.update_block) {
        send_setpoint(stabilizer_.step(static_cast<double>(block_m) / static_cast<double>(block_n)));
        block_n = block_m = 0;
      }
      const double scale = clicks.empty() ? 2.0
                                          : std::clamp(static_cast<double>(config_.target_events_per_chunk) /
                                                           static_cast<double>(clicks.size()),
                                                       0.5, 2.0);
      chunk_slots = std::max(1.0, chunk_slots * scale);
    }
    (void)r;
  }

  void distill_key(SessionResult& r) {
    const auto& params = config_.distillation;
    const auto n = bob_sifted_.size();
    const double q_prior = params.cascade_q_prior;
    const distill::CascadeSchedule schedule{
        distill::first_block_size(q_prior, params.ec_block_size), params.cascade_passes, params.ec_block_size};
    r.cascade_first_block = schedule.first_block;
    const service::ShuffleSeed shuffle{rng_(), schedule.passes, schedule.first_block, n};
    const auto echo = service::ShuffleSeed::decode(call(shuffle.encode(), MessageType::shuffle_seed));
    if (echo.seed != shuffle.seed || echo.key_length != n)
      abort(SessionStatus::protocol_error, service::AbortReason::protocol_error, "SHUFFLE_SEED echo mismatch");

    distill::CascadeCorrector corrector(bob_sifted_, shuffle.seed, schedule);
    while (auto req = corrector.next_request()) {
      corrector.on_response(
          service::ParityResponse::decode(call(req->encode(), MessageType::cascade_parity_resp)));
      ++r.cascade_rounds;
    }
    r.bob_corrected = corrector.key();
    r.lambda_ec = corrector.leaked();
    for (auto pos : corrector.flips()) ++stats_[intensity_[pos]].m_z;

    const std::uint64_t verify_seed = rng_();
    const auto bob_hash = distill::verification_hash(r.bob_corrected, verify_seed);
    const auto v = service::VerifyReply::decode(
        call(service::VerifyRequest{verify_seed, bob_hash}.encode(), MessageType::verify_hash));
    r.verified = v.match && v.hash == bob_hash;
    if (!r.verified) {
      abort(SessionStatus::verification_failed, service::AbortReason::verification_failed,
            "verification hash mismatch after reconciliation");
    }

    r.bounds = distill::decoy_bounds(stats_, emission_, params, static_cast<double>(r.lambda_ec));
    r.key_length = distill::key_length(r.bounds, params);
    if (stats_.q_z() > params.qber_abort || stats_.phi_raw() > params.qber_abort) {
      r.qber_abort = true;
      r.key_length = 0;
    }

    const service::PaSeed pa{rng_(), r.key_length};
    const auto ack = service::KeyAck::decode(call(pa.encode(), MessageType::key_ack));
    if (ack.length != pa.length)
      abort(SessionStatus::protocol_error, service::AbortReason::protocol_error, "KEY_ACK length mismatch");
    r.bob_key = distill::toeplitz_hash(r.bob_corrected, pa.length, pa.seed);
    r.skr_bps = stats_.elapsed_time_s > 0.0 ? static_cast<double>(r.key_length) / stats_.elapsed_time_s : 0.0;
  }

  SessionConfig config_;
  QuantumLink& quantum_;
  RequestChannel& channel_;
  PhaseStabilizer stabilizer_;
  Rng rng_;
  EmissionConfig emission_;
  MonitorStats stats_;
  distill::Bits bob_sifted_;
  std::vector<Intensity> intensity_;
};

enum class TransportKind { loopback, socket };

struct TransportOptions {
  TransportKind kind = TransportKind::loopback;
  service::LoopbackOptions loopback;
};

/// Runs both engines over the chosen transport and collects their outputs.
inline SessionResult run_session(const SessionConfig& config, const TransportOptions& transport = {}) {
  config.validate();
  Transmitter tx(config.emission, derive_seed(config.seed, "alice-symbols"));
  QuantumLink quantum(config.link, tx, config.stabilization.drift, derive_seed(config.seed, "channel"));
  AliceEngine alice(tx);
  service::Transcript transcript;
  SessionResult r;

  if (transport.kind == TransportKind::loopback) {
    auto pair = service::loopback_pair(transport.loopback);
    pair.alice->set_transcript(&transcript, service::Side::alice);
    pair.bob->set_transcript(&transcript, service::Side::bob);
    LoopbackChannel channel(pair, alice);
    BobEngine bob(config, quantum, channel);
    r = bob.run();
  } else {
    service::SocketListener listener;
    auto bob_ep = service::connect_localhost(listener.port());
    auto alice_ep = listener.accept();
    alice_ep->set_transcript(&transcript, service::Side::alice);
    bob_ep->set_transcript(&transcript, service::Side::bob);
    std::thread server([&] { serve_alice(alice, *alice_ep); });
    StreamChannel channel(*bob_ep);
    BobEngine bob(config, quantum, channel);
    r = bob.run();
    bob_ep->close();
    server.join();
  }

  r.alice_sifted = alice.sifted_key();
  r.alice_key = alice.final_key();
  r.transcript = transcript.bytes();
  r.frames = transcript.frames();
  if (r.complete() && r.alice_key != r.bob_key) {
    r.status = SessionStatus::verification_failed;
    r.message = "final keys differ";
  }
  return r;
}

}  // namespace qkdlink::protocol
