#pragma once

// Wire framing of the classical service channel:
//
//   "QKDS" | version 0x01 | msg_type | u32 BE payload length | payload | CRC32
//
// The CRC (IEEE 802.3, as in zlib) covers header and payload.

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkdlink::service {

inline constexpr std::array<std::uint8_t, 4> kMagic{0x51, 0x4B, 0x44, 0x53};
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 10;
inline constexpr std::size_t kTrailerSize = 4;

enum class MessageType : std::uint8_t {
  hello = 0x01,
  session_params = 0x02,
  detection_announce = 0x10,
  sift_reply = 0x11,
  cascade_parity_req = 0x20,
  cascade_parity_resp = 0x21,
  shuffle_seed = 0x22,
  verify_hash = 0x30,
  pa_seed = 0x40,
  key_ack = 0x41,
  stabilizer_note = 0x50,
  abort = 0x60,
};

inline bool is_known_type(std::uint8_t t) {
  switch (t) {
    case 0x01: case 0x02: case 0x10: case 0x11: case 0x20: case 0x21:
    case 0x22: case 0x30: case 0x40: case 0x41: case 0x50: case 0x60:
      return true;
    default:
      return false;
  }
}

inline const char* to_string(MessageType t) {
  switch (t) {
    case MessageType::hello: return "HELLO";
    case MessageType::session_params: return "SESSION_PARAMS";
    case MessageType::detection_announce: return "DETECTION_ANNOUNCE";
    case MessageType::sift_reply: return "SIFT_REPLY";
    case MessageType::cascade_parity_req: return "CASCADE_PARITY_REQ";
    case MessageType::cascade_parity_resp: return "CASCADE_PARITY_RESP";
    case MessageType::shuffle_seed: return "SHUFFLE_SEED";
    case MessageType::verify_hash: return "VERIFY_HASH";
    case MessageType::pa_seed: return "PA_SEED";
    case MessageType::key_ack: return "KEY_ACK";
    case MessageType::stabilizer_note: return "STABILIZER_NOTE";
    case MessageType::abort: return "ABORT";
  }
  return "?";
}

struct Frame {
  MessageType type = MessageType::hello;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

enum class FrameErrorKind { desync, corrupt, incomplete, bad_version, unknown_type };

class FrameError : public std::runtime_error {
 public:
  FrameError(FrameErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  FrameErrorKind kind() const { return kind_; }

 private:
  FrameErrorKind kind_;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in pieces.
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto piece = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, bytes.data() + done, piece);
    done += piece;
  }
  return static_cast<std::uint32_t>(crc);
}

inline void put_u32_be(std::uint8_t* out, std::uint32_t v) {
  out[0] = static_cast<std::uint8_t>(v >> 24);
  out[1] = static_cast<std::uint8_t>(v >> 16);
  out[2] = static_cast<std::uint8_t>(v >> 8);
  out[3] = static_cast<std::uint8_t>(v);
}

inline std::uint32_t get_u32_be(const std::uint8_t* in) {
  return (std::uint32_t{in[0]} << 24) | (std::uint32_t{in[1]} << 16) | (std::uint32_t{in[2]} << 8) |
         std::uint32_t{in[3]};
}

inline std::vector<std::uint8_t> encode_frame(MessageType type, std::span<const std::uint8_t> payload) {
  if (payload.size() > std::numeric_limits<std::uint32_t>::max())
    throw std::length_error("encode_frame: payload exceeds 2^32 - 1 bytes");
  std::vector<std::uint8_t> out(kHeaderSize + payload.size() + kTrailerSize);
  std::memcpy(out.data(), kMagic.data(), kMagic.size());
  out[4] = kVersion;
  out[5] = static_cast<std::uint8_t>(type);
  put_u32_be(out.data() + 6, static_cast<std::uint32_t>(payload.size()));
  if (!payload.empty()) std::memcpy(out.data() + kHeaderSize, payload.data(), payload.size());
  const auto crc = crc32_of({out.data(), kHeaderSize + payload.size()});
  put_u32_be(out.data() + kHeaderSize + payload.size(), crc);
  return out;
}

inline std::vector<std::uint8_t> encode_frame(const Frame& f) { return encode_frame(f.type, f.payload); }

struct Decoded {
  Frame frame;
  std::size_t consumed = 0;
};

/// Decodes exactly one frame from the front of `bytes`.
inline Decoded decode_frame(std::span<const std::uint8_t> bytes) {
  const std::size_t magic_check = std::min(bytes.size(), kMagic.size());
  if (std::memcmp(bytes.data(), kMagic.data(), magic_check) != 0)
    throw FrameError(FrameErrorKind::desync, "bad magic");
  if (bytes.size() < kHeaderSize) throw FrameError(FrameErrorKind::incomplete, "truncated header");
  if (bytes[4] != kVersion)
    throw FrameError(FrameErrorKind::bad_version, "unsupported protocol version " + std::to_string(bytes[4]));
  const std::size_t length = get_u32_be(bytes.data() + 6);
  const std::size_t total = kHeaderSize + length + kTrailerSize;
  if (bytes.size() < total) throw FrameError(FrameErrorKind::incomplete, "truncated frame");
  const auto crc = get_u32_be(bytes.data() + kHeaderSize + length);
  if (crc != crc32_of(bytes.first(kHeaderSize + length)))
    throw FrameError(FrameErrorKind::corrupt, "CRC mismatch");
  if (!is_known_type(bytes[5]))
    throw FrameError(FrameErrorKind::unknown_type, "unknown message type " + std::to_string(bytes[5]));
  Decoded d;
  d.frame.type = static_cast<MessageType>(bytes[5]);
  d.frame.payload.assign(bytes.begin() + kHeaderSize, bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderSize + length));
  d.consumed = total;
  return d;
}

/// Incremental decoder over a byte stream. On a bad frame it reports the
/// error once and resynchronizes by scanning forward to the next magic.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

  /// Next complete frame, nullopt if more bytes are needed. Throws FrameError
  /// for a malformed frame after dropping the bytes that caused it.
  std::optional<Frame> next() {
    compact();
    if (start_ == buffer_.size()) return std::nullopt;
    try {
      auto d = decode_frame({buffer_.data() + start_, buffer_.size() - start_});
      start_ += d.consumed;
      return std::move(d.frame);
    } catch (const FrameError& e) {
      if (e.kind() == FrameErrorKind::incomplete) return std::nullopt;
      skip_to_next_magic();
      throw;
    }
  }

  std::size_t buffered() const { return buffer_.size() - start_; }

 private:
  void skip_to_next_magic() {
    std::size_t i = start_ + 1;
    for (; i < buffer_.size(); ++i) {
      const std::size_t n = std::min(kMagic.size(), buffer_.size() - i);
      if (std::memcmp(buffer_.data() + i, kMagic.data(), n) == 0) break;
    }
    start_ = i;
  }

  void compact() {
    if (start_ > 4096 && start_ * 2 > buffer_.size()) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(start_));
      start_ = 0;
    }
  }

  std::vector<std::uint8_t> buffer_;
  std::size_t start_ = 0;
};

}  // namespace qkdlink::service
