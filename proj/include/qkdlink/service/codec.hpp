#pragma once

// Big-endian payload building blocks and the payload layout of every message.

#include "qkdlink/service/frame.hpp"

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkdlink::service {

class ByteWriter {
 public:
  ByteWriter& u8(std::uint8_t v) {
    out_.push_back(v);
    return *this;
  }
  ByteWriter& u16(std::uint16_t v) { return be(v, 2); }
  ByteWriter& u32(std::uint32_t v) { return be(v, 4); }
  ByteWriter& u64(std::uint64_t v) { return be(v, 8); }
  ByteWriter& f64(double v) { return be(std::bit_cast<std::uint64_t>(v), 8); }
  ByteWriter& bytes(std::span<const std::uint8_t> b) {
    out_.insert(out_.end(), b.begin(), b.end());
    return *this;
  }
  ByteWriter& str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
    return *this;
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }
  Frame frame(MessageType t) { return Frame{t, take()}; }

 private:
  ByteWriter& be(std::uint64_t v, int n) {
    for (int i = n - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
  }
  std::vector<std::uint8_t> out_;
};

class PayloadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(be(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(be(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(be(4)); }
  std::uint64_t u64() { return be(8); }
  double f64() { return std::bit_cast<double>(be(8)); }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() {
    const auto n = u32();
    auto b = bytes(n);
    return std::string(b.begin(), b.end());
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) throw PayloadError("trailing bytes in payload");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw PayloadError("payload too short");
  }
  std::uint64_t be(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | in_[pos_ + static_cast<std::size_t>(i)];
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------- payloads

/// Bob -> Alice: session id | block_target_n u64 | ec_block_size u32 | passes u8.
/// Alice -> Bob: mu_signal | mu_decoy | p_z_alice | p_signal | qubit_rate (f64 each).
struct SessionRequest {
  std::uint64_t session_id = 0;
  std::uint64_t block_target_n = 0;
  std::uint32_t ec_block_size = 8192;
  std::uint8_t cascade_passes = 4;

  Frame encode() const {
    return ByteWriter().u64(session_id).u64(block_target_n).u32(ec_block_size).u8(cascade_passes).frame(
        MessageType::session_params);
  }
  static SessionRequest decode(const Frame& f) {
    ByteReader r(f.payload);
    SessionRequest s{r.u64(), r.u64(), r.u32(), r.u8()};
    r.expect_end();
    return s;
  }
};

struct SessionReply {
  double mu_signal = 0, mu_decoy = 0, p_z_alice = 0, p_signal = 0, qubit_rate_hz = 0;

  Frame encode() const {
    return ByteWriter().f64(mu_signal).f64(mu_decoy).f64(p_z_alice).f64(p_signal).f64(qubit_rate_hz).frame(
        MessageType::session_params);
  }
  static SessionReply decode(const Frame& f) {
    ByteReader r(f.payload);
    SessionReply s{r.f64(), r.f64(), r.f64(), r.f64(), r.f64()};
    r.expect_end();
    return s;
  }
};

/// Detection of one slot as Bob announces it (his basis only, never the bit).
struct Announcement {
  std::uint64_t qubit_index = 0;
  std::uint8_t basis = 0;  // 0 = Z, 1 = X

  friend bool operator==(const Announcement&, const Announcement&) = default;
};

/// chunk_begin u64 | chunk_end u64 | count u32 | count x (index u64, basis u8).
struct DetectionAnnounce {
  std::uint64_t chunk_begin = 0;
  std::uint64_t chunk_end = 0;
  std::vector<Announcement> detections;

  Frame encode() const {
    ByteWriter w;
    w.u64(chunk_begin).u64(chunk_end).u32(static_cast<std::uint32_t>(detections.size()));
    for (const auto& a : detections) w.u64(a.qubit_index).u8(a.basis);
    return w.frame(MessageType::detection_announce);
  }
  static DetectionAnnounce decode(const Frame& f) {
    ByteReader r(f.payload);
    DetectionAnnounce d;
    d.chunk_begin = r.u64();
    d.chunk_end = r.u64();
    const auto n = r.u32();
    if (r.remaining() != std::size_t{n} * 9) throw PayloadError("DETECTION_ANNOUNCE: length mismatch");
    d.detections.resize(n);
    for (auto& a : d.detections) {
      a.qubit_index = r.u64();
      a.basis = r.u8();
      if (a.basis > 1) throw PayloadError("DETECTION_ANNOUNCE: bad basis");
    }
    return d;
  }
};

/// Per announced slot: bit0 Alice basis (1 = X), bit1 decoy intensity, bit2 keep.
struct SiftFlags {
  static constexpr std::uint8_t kAliceX = 0x01;
  static constexpr std::uint8_t kDecoy = 0x02;
  static constexpr std::uint8_t kKeep = 0x04;
};

struct SiftReply {
  std::vector<std::uint8_t> flags;

  Frame encode() const {
    return ByteWriter().u32(static_cast<std::uint32_t>(flags.size())).bytes(flags).frame(MessageType::sift_reply);
  }
  static SiftReply decode(const Frame& f) {
    ByteReader r(f.payload);
    SiftReply s;
    const auto n = r.u32();
    auto b = r.bytes(n);
    s.flags.assign(b.begin(), b.end());
    r.expect_end();
    return s;
  }
};

/// seed u64 | passes u8 | first block size u32 | key length u64.
struct ShuffleSeed {
  std::uint64_t seed = 0;
  std::uint8_t passes = 4;
  std::uint32_t first_block = 0;
  std::uint64_t key_length = 0;

  Frame encode() const {
    return ByteWriter().u64(seed).u8(passes).u32(first_block).u64(key_length).frame(MessageType::shuffle_seed);
  }
  static ShuffleSeed decode(const Frame& f) {
    ByteReader r(f.payload);
    ShuffleSeed s{r.u64(), r.u8(), r.u32(), r.u64()};
    r.expect_end();
    return s;
  }
};

/// A parity query over positions [begin, end) of a pass's shuffled key.
struct ParityQuery {
  std::uint8_t pass = 0;
  std::uint32_t begin = 0;
  std::uint32_t end = 0;

  friend bool operator==(const ParityQuery&, const ParityQuery&) = default;
};

struct ParityRequest {
  std::vector<ParityQuery> queries;

  Frame encode() const {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(queries.size()));
    for (const auto& q : queries) w.u8(q.pass).u32(q.begin).u32(q.end);
    return w.frame(MessageType::cascade_parity_req);
  }
  static ParityRequest decode(const Frame& f) {
    ByteReader r(f.payload);
    ParityRequest p;
    const auto n = r.u32();
    if (r.remaining() != std::size_t{n} * 9) throw PayloadError("CASCADE_PARITY_REQ: length mismatch");
    p.queries.resize(n);
    for (auto& q : p.queries) q = {r.u8(), r.u32(), r.u32()};
    return p;
  }
};

/// count u32 | ceil(count / 8) bytes of parities, LSB-first within a byte.
struct ParityResponse {
  std::vector<std::uint8_t> parities;  // one 0/1 per query

  Frame encode() const {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(parities.size()));
    std::vector<std::uint8_t> packed((parities.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < parities.size(); ++i)
      if (parities[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    w.bytes(packed);
    return w.frame(MessageType::cascade_parity_resp);
  }
  static ParityResponse decode(const Frame& f) {
    ByteReader r(f.payload);
    ParityResponse p;
    const auto n = r.u32();
    auto packed = r.bytes((std::size_t{n} + 7) / 8);
    r.expect_end();
    p.parities.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.parities[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return p;
  }
};

/// Bob -> Alice: seed u64 | Bob's hash u64. Alice -> Bob: Alice's hash u64 | match u8.
struct VerifyRequest {
  std::uint64_t seed = 0;
  std::uint64_t hash = 0;
  Frame encode() const { return ByteWriter().u64(seed).u64(hash).frame(MessageType::verify_hash); }
  static VerifyRequest decode(const Frame& f) {
    ByteReader r(f.payload);
    VerifyRequest v{r.u64(), r.u64()};
    r.expect_end();
    return v;
  }
};

struct VerifyReply {
  std::uint64_t hash = 0;
  bool match = false;
  Frame encode() const { return ByteWriter().u64(hash).u8(match ? 1 : 0).frame(MessageType::verify_hash); }
  static VerifyReply decode(const Frame& f) {
    ByteReader r(f.payload);
    VerifyReply v{r.u64(), r.u8() != 0};
    r.expect_end();
    return v;
  }
};

/// seed u64 | final length u64.
struct PaSeed {
  std::uint64_t seed = 0;
  std::uint64_t length = 0;
  Frame encode() const { return ByteWriter().u64(seed).u64(length).frame(MessageType::pa_seed); }
  static PaSeed decode(const Frame& f) {
    ByteReader r(f.payload);
    PaSeed p{r.u64(), r.u64()};
    r.expect_end();
    return p;
  }
};

/// final length u64.
struct KeyAck {
  std::uint64_t length = 0;
  Frame encode() const { return ByteWriter().u64(length).frame(MessageType::key_ack); }
  static KeyAck decode(const Frame& f) {
    ByteReader r(f.payload);
    KeyAck k{r.u64()};
    r.expect_end();
    return k;
  }
};

/// block id u32 | phase f64 (rad). Bob sends the requested setpoint, Alice
/// echoes the phase she applied.
struct StabilizerNote {
  std::uint32_t block = 0;
  double phase = 0.0;
  Frame encode() const { return ByteWriter().u32(block).f64(phase).frame(MessageType::stabilizer_note); }
  static StabilizerNote decode(const Frame& f) {
    ByteReader r(f.payload);
    StabilizerNote s{r.u32(), r.f64()};
    r.expect_end();
    return s;
  }
};

enum class AbortReason : std::uint8_t {
  timeout = 1,
  verification_failed = 2,
  protocol_error = 3,
  transport_failure = 4,
  no_key = 5,
};

/// reason u8 | utf-8 text (u32 length prefix).
struct AbortNote {
  AbortReason reason = AbortReason::protocol_error;
  std::string text;
  Frame encode() const { return ByteWriter().u8(static_cast<std::uint8_t>(reason)).str(text).frame(MessageType::abort); }
  static AbortNote decode(const Frame& f) {
    ByteReader r(f.payload);
    AbortNote a;
    a.reason = static_cast<AbortReason>(r.u8());
    a.text = r.str();
    r.expect_end();
    return a;
  }
};

inline Frame hello_frame() { return Frame{MessageType::hello, {}}; }

}  // namespace qkdlink::service
