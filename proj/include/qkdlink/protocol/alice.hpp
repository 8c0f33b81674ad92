#pragma once

// Alice's engine. Purely reactive: every frame from Bob gets at most one
// reply, computed from her own symbol record.

#include "qkdlink/distillation/cascade.hpp"
#include "qkdlink/distillation/toeplitz.hpp"
#include "qkdlink/protocol/quantum_link.hpp"
#include "qkdlink/service/codec.hpp"

#include <optional>
#include <string>

namespace qkdlink::protocol {

using distill::Bits;
using service::Frame;
using service::MessageType;

class AliceEngine {
 public:
  explicit AliceEngine(Transmitter& tx) : tx_(tx) {}

  /// Handles one frame; returns the reply, if any. Malformed or out-of-order
  /// requests are answered with ABORT and end the session.
  std::optional<Frame> handle(const Frame& f) {
    if (finished_) return abort(service::AbortReason::protocol_error, "session already finished");
    try {
      return dispatch(f);
    } catch (const service::PayloadError& e) {
      return abort(service::AbortReason::protocol_error, e.what());
    } catch (const std::invalid_argument& e) {
      return abort(service::AbortReason::protocol_error, e.what());
    }
  }

  bool finished() const { return finished_; }
  bool aborted() const { return aborted_.has_value(); }
  const std::optional<service::AbortNote>& abort_note() const { return aborted_; }

  const Bits& sifted_key() const { return sifted_; }
  const std::vector<Intensity>& sifted_intensity() const { return sifted_intensity_; }
  const Bits& final_key() const { return final_key_; }
  std::uint64_t disclosed_parities() const { return responder_ ? responder_->disclosed() : 0; }
  std::uint64_t monitor_slots() const { return monitor_slots_; }

 private:
  std::optional<Frame> dispatch(const Frame& f) {
    switch (f.type) {
      case MessageType::hello:
        if (f.payload.size() != 0) throw service::PayloadError("HELLO: unexpected payload");
        hello_ = true;
        return service::hello_frame();
      case MessageType::session_params: {
        require(hello_, "SESSION_PARAMS before HELLO");
        const auto req = service::SessionRequest::decode(f);
        session_id_ = req.session_id;
        if (req.ec_block_size == 0 || (req.ec_block_size & (req.ec_block_size - 1)))
          throw std::invalid_argument("SESSION_PARAMS: EC block size must be a power of two");
        ec_block_size_ = req.ec_block_size;
        const auto e = tx_.snapshot();
        return service::SessionReply{e.mu_signal, e.mu_decoy, e.p_z_alice, e.p_signal, e.qubit_rate_hz}.encode();
      }
      case MessageType::detection_announce:
        require(hello_ && !responder_, "DETECTION_ANNOUNCE out of order");
        return sift(service::DetectionAnnounce::decode(f));
      case MessageType::stabilizer_note: {
        require(hello_ && !responder_, "STABILIZER_NOTE out of order");
        const auto note = service::StabilizerNote::decode(f);
        tx_.set_phase(note.phase);
        return service::StabilizerNote{note.block, tx_.phase()}.encode();
      }
      case MessageType::shuffle_seed: {
        require(hello_ && !responder_, "SHUFFLE_SEED out of order");
        const auto s = service::ShuffleSeed::decode(f);
        if (s.key_length != sifted_.size()) throw std::invalid_argument("SHUFFLE_SEED: key length mismatch");
        if (s.passes == 0 || s.first_block == 0) throw std::invalid_argument("SHUFFLE_SEED: bad schedule");
        if (s.first_block > ec_block_size_) throw std::invalid_argument("SHUFFLE_SEED: first block exceeds EC block size");
        schedule_ = distill::CascadeSchedule{s.first_block, s.passes, ec_block_size_};
        responder_.emplace(sifted_, s.seed, schedule_);
        return s.encode();
      }
      case MessageType::cascade_parity_req:
        require(responder_.has_value(), "CASCADE_PARITY_REQ before SHUFFLE_SEED");
        return responder_->answer(service::ParityRequest::decode(f)).encode();
      case MessageType::verify_hash: {
        const auto v = service::VerifyRequest::decode(f);
        const auto mine = distill::verification_hash(sifted_, v.seed);
        return service::VerifyReply{mine, mine == v.hash}.encode();
      }
      case MessageType::pa_seed: {
        const auto p = service::PaSeed::decode(f);
        if (p.length > sifted_.size()) throw std::invalid_argument("PA_SEED: length exceeds key");
        final_key_ = distill::toeplitz_hash(sifted_, p.length, p.seed);
        finished_ = true;
        return service::KeyAck{p.length}.encode();
      }
      case MessageType::abort:
        aborted_ = service::AbortNote::decode(f);
        finished_ = true;
        return std::nullopt;
      default:
        throw std::invalid_argument(std::string("unexpected ") + service::to_string(f.type) + " at Alice");
    }
  }

  Frame sift(const service::DetectionAnnounce& a) {
    if (a.chunk_end < a.chunk_begin || a.chunk_begin < next_slot_)
      throw std::invalid_argument("DETECTION_ANNOUNCE: chunk out of order");
    service::SiftReply reply;
    reply.flags.reserve(a.detections.size());
    std::optional<std::uint64_t> last;
    for (const auto& d : a.detections) {
      if (d.qubit_index < a.chunk_begin || d.qubit_index >= a.chunk_end)
        throw std::invalid_argument("DETECTION_ANNOUNCE: index outside chunk");
      if (last && d.qubit_index <= *last) throw std::invalid_argument("DETECTION_ANNOUNCE: duplicate qubit index");
      last = d.qubit_index;
      const auto s = tx_.symbols().symbol_at(d.qubit_index);
      const auto bob = d.basis == 0 ? Basis::z : Basis::x;
      std::uint8_t flags = 0;
      if (s.basis == Basis::x) flags |= service::SiftFlags::kAliceX;
      if (s.intensity == Intensity::decoy) flags |= service::SiftFlags::kDecoy;
      if (s.basis == bob) {
        flags |= service::SiftFlags::kKeep;
        if (s.basis == Basis::z) {
          sifted_.push_back(s.bit);
          sifted_intensity_.push_back(s.intensity);
        }
      }
      reply.flags.push_back(flags);
    }
    next_slot_ = a.chunk_end;
    monitor_slots_ = a.chunk_end;
    return reply.encode();
  }

  Frame abort(service::AbortReason reason, const std::string& text) {
    finished_ = true;
    service::AbortNote note{reason, text};
    aborted_ = note;
    return note.encode();
  }

  static void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  }

  Transmitter& tx_;
  bool hello_ = false;
  bool finished_ = false;
  std::optional<service::AbortNote> aborted_;
  std::uint64_t session_id_ = 0;
  std::uint32_t ec_block_size_ = 8192;
  std::uint64_t next_slot_ = 0;
  std::uint64_t monitor_slots_ = 0;
  Bits sifted_;
  std::vector<Intensity> sifted_intensity_;
  distill::CascadeSchedule schedule_;
  std::optional<distill::CascadeResponder> responder_;
  Bits final_key_;
};

}  // namespace qkdlink::protocol
