#include "smartmask/protocol.hpp"

#include <sodium.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include "smartmask/crc32.hpp"

namespace smartmask::protocol {

namespace {

static_assert(crypto_aead_chacha20poly1305_IETF_NPUBBYTES == kNonceSize);
static_assert(crypto_aead_chacha20poly1305_IETF_ABYTES == kTagSize);
static_assert(crypto_aead_chacha20poly1305_IETF_KEYBYTES == kKeySize);

constexpr std::size_t kSealOverhead = kNonceSize + kTagSize;

void ensure_sodium() {
  static const int status = sodium_init();
  if (status < 0) throw std::runtime_error("libsodium initialisation failed");
}

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) u8(static_cast<std::uint8_t>(v >> shift));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  bool has(std::size_t n) const { return data_.size() - pos_ >= n; }
  std::uint8_t u8() { return data_[pos_++]; }
  std::uint16_t u16() {
    const auto lo = u8();
    const auto hi = u8();
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int shift = 0; shift < 32; shift += 8) v |= static_cast<std::uint32_t>(u8()) << shift;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::span<const std::uint8_t> rest() const { return data_.subspan(pos_); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kTelemetrySize = 4 + 4 * kPmBins * 2 + 4 + 4 + 1;
constexpr std::size_t kStatusSize = 8;
constexpr std::size_t kAckSize = 3;
constexpr std::size_t kSprayOnArgsSize = 12;
constexpr std::size_t kSetParamsArgsSize = 16;

std::optional<Message> decode_payload(MessageType type, std::span<const std::uint8_t> payload) {
  Reader r(payload);
  switch (type) {
    case MessageType::telemetry: {
      if (payload.size() != kTelemetrySize) return std::nullopt;
      Telemetry t;
      t.timestamp_ms = r.u32();
      for (float& v : t.number) v = r.f32();
      for (float& v : t.mass) v = r.f32();
      t.temperature = r.f32();
      t.rh = r.f32();
      t.risk = r.u8();
      return t;
    }
    case MessageType::status: {
      if (payload.size() != kStatusSize) return std::nullopt;
      Status s;
      s.battery_pct = r.u8();
      s.liquid_pct = r.u8();
      s.mode = r.u8();
      s.spraying = r.u8();
      s.cumulative_exposure = r.f32();
      return s;
    }
    case MessageType::alert: {
      if (payload.size() != 1) return std::nullopt;
      return Alert{r.u8()};
    }
    case MessageType::command: {
      if (payload.empty()) return std::nullopt;
      Command c;
      c.code = r.u8();
      const auto rest = r.rest();
      c.args.assign(rest.begin(), rest.end());
      return c;
    }
    case MessageType::ack: {
      if (payload.size() != kAckSize) return std::nullopt;
      Ack a;
      a.seq = r.u16();
      a.status = r.u8();
      return a;
    }
  }
  return std::nullopt;
}

bool known_type(std::uint8_t raw) { return raw >= 1 && raw <= 5; }

std::vector<std::uint8_t> assemble(MessageType type, std::uint8_t flags, std::uint16_t seq,
                                   std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> frame;
  frame.reserve(kHeaderSize + payload.size() + kCrcSize);
  frame.push_back(kMagic0);
  frame.push_back(kMagic1);
  frame.push_back(kVersion);
  frame.push_back(static_cast<std::uint8_t>(type));
  frame.push_back(flags);
  frame.push_back(static_cast<std::uint8_t>(seq));
  frame.push_back(static_cast<std::uint8_t>(seq >> 8));
  frame.push_back(static_cast<std::uint8_t>(payload.size()));
  frame.push_back(static_cast<std::uint8_t>(payload.size() >> 8));
  frame.insert(frame.end(), payload.begin(), payload.end());
  const std::uint32_t crc = crc32(frame);
  for (int shift = 0; shift < 32; shift += 8) frame.push_back(static_cast<std::uint8_t>(crc >> shift));
  return frame;
}

DecodeResult decode_impl(std::span<const std::uint8_t> bytes, const SessionKey* key) {
  if (bytes.size() < kHeaderSize) {
    // Reject early if what we have already cannot start a frame.
    if (!bytes.empty() && bytes[0] != kMagic0) return DecodeError::framing;
    if (bytes.size() >= 2 && bytes[1] != kMagic1) return DecodeError::framing;
    return DecodeError::incomplete;
  }
  if (bytes[0] != kMagic0 || bytes[1] != kMagic1 || bytes[2] != kVersion) {
    return DecodeError::framing;
  }
  const std::uint8_t raw_type = bytes[3];
  const std::uint8_t flags = bytes[4];
  const auto seq = static_cast<std::uint16_t>(bytes[5] | (bytes[6] << 8));
  const std::size_t payload_len = static_cast<std::size_t>(bytes[7] | (bytes[8] << 8));
  if (payload_len > kMaxPayload || (flags & ~kFlagEncrypted) != 0) return DecodeError::framing;
  const std::size_t frame_size = kHeaderSize + payload_len + kCrcSize;
  if (bytes.size() < frame_size) return DecodeError::incomplete;

  const auto body = bytes.first(kHeaderSize + payload_len);
  const auto trailer = bytes.subspan(kHeaderSize + payload_len, kCrcSize);
  const std::uint32_t wire_crc = static_cast<std::uint32_t>(trailer[0]) |
                                 static_cast<std::uint32_t>(trailer[1]) << 8 |
                                 static_cast<std::uint32_t>(trailer[2]) << 16 |
                                 static_cast<std::uint32_t>(trailer[3]) << 24;
  if (crc32(body) != wire_crc) return DecodeError::integrity;
  if (!known_type(raw_type)) return DecodeError::unsupported;

  const bool encrypted = (flags & kFlagEncrypted) != 0;
  if (encrypted != (key != nullptr)) return DecodeError::security;

  DecodedFrame out;
  out.seq = seq;
  out.encrypted = encrypted;
  out.frame_size = frame_size;
  const auto payload = bytes.subspan(kHeaderSize, payload_len);
  std::vector<std::uint8_t> plain;
  std::span<const std::uint8_t> message_bytes = payload;
  if (encrypted) {
    if (payload_len < kSealOverhead) return DecodeError::security;
    ensure_sodium();
    SessionKey::Nonce nonce{};
    std::copy_n(payload.begin(), kNonceSize, nonce.begin());
    const auto sealed = payload.subspan(kNonceSize);
    plain.resize(sealed.size() - kTagSize);
    unsigned long long plain_len = 0;
    const int rc = crypto_aead_chacha20poly1305_ietf_decrypt(
        plain.data(), &plain_len, nullptr, sealed.data(), sealed.size(), bytes.data(),
        kHeaderSize, nonce.data(), key->key().data());
    if (rc != 0) return DecodeError::security;
    plain.resize(static_cast<std::size_t>(plain_len));
    message_bytes = plain;
    out.nonce = nonce;
  }
  auto message = decode_payload(static_cast<MessageType>(raw_type), message_bytes);
  if (!message) return DecodeError::malformed;
  out.message = std::move(*message);
  return out;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

Command command_with(CommandCode code, std::vector<std::uint8_t> args = {}) {
  return Command{static_cast<std::uint8_t>(code), std::move(args)};
}

}  // namespace

MessageType message_type(const Message& message) {
  return static_cast<MessageType>(message.index() + 1);
}

std::string_view to_string(MessageType type) {
  switch (type) {
    case MessageType::telemetry: return "telemetry";
    case MessageType::status: return "status";
    case MessageType::alert: return "alert";
    case MessageType::command: return "command";
    case MessageType::ack: return "ack";
  }
  return "unknown";
}

std::string_view to_string(DecodeError error) {
  switch (error) {
    case DecodeError::incomplete: return "incomplete";
    case DecodeError::framing: return "framing";
    case DecodeError::integrity: return "integrity";
    case DecodeError::security: return "security";
    case DecodeError::unsupported: return "unsupported";
    case DecodeError::malformed: return "malformed";
  }
  return "unknown";
}

Command make_set_mode(std::uint8_t mode) { return command_with(CommandCode::set_mode, {mode}); }

Command make_spray_on(std::optional<SprayOnArgs> args) {
  if (!args) return command_with(CommandCode::spray_on);
  Writer w;
  w.f32(args->intensity);
  w.f32(args->duration);
  w.f32(args->angle_factor);
  return command_with(CommandCode::spray_on, w.take());
}

Command make_spray_off() { return command_with(CommandCode::spray_off); }

Command make_ack_alert(AlertCode code) {
  return command_with(CommandCode::ack_alert, {static_cast<std::uint8_t>(code)});
}

Command make_set_params(const SetParamsArgs& args) {
  Writer w;
  w.f32(args.spray_duration);
  w.f32(args.intensity_high);
  w.f32(args.intensity_very_high);
  w.f32(args.cooldown);
  return command_with(CommandCode::set_params, w.take());
}

std::optional<std::uint8_t> parse_set_mode(const Command& command) {
  if (command.args.size() != 1) return std::nullopt;
  return command.args[0];
}

std::optional<SprayOnArgs> parse_spray_on(const Command& command) {
  if (command.args.empty()) return SprayOnArgs{};
  if (command.args.size() != kSprayOnArgsSize) return std::nullopt;
  Reader r(command.args);
  SprayOnArgs a;
  a.intensity = r.f32();
  a.duration = r.f32();
  a.angle_factor = r.f32();
  return a;
}

std::optional<AlertCode> parse_ack_alert(const Command& command) {
  if (command.args.size() != 1) return std::nullopt;
  const std::uint8_t code = command.args[0];
  if (code < 1 || code > 3) return std::nullopt;
  return static_cast<AlertCode>(code);
}

std::optional<SetParamsArgs> parse_set_params(const Command& command) {
  if (command.args.size() != kSetParamsArgsSize) return std::nullopt;
  Reader r(command.args);
  SetParamsArgs a;
  a.spray_duration = r.f32();
  a.intensity_high = r.f32();
  a.intensity_very_high = r.f32();
  a.cooldown = r.f32();
  return a;
}

SessionKey::SessionKey(const KeyBytes& key, std::uint32_t nonce_prefix)
    : key_(key), prefix_(nonce_prefix) {}

SessionKey SessionKey::from_hex(std::string_view hex, std::uint32_t nonce_prefix) {
  if (hex.size() != 2 * kKeySize) throw std::invalid_argument("key must be 64 hex characters");
  KeyBytes key{};
  for (std::size_t i = 0; i < kKeySize; ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("key contains a non-hex character");
    key[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return SessionKey(key, nonce_prefix);
}

SessionKey::Nonce SessionKey::next_nonce() {
  if (counter_ == UINT64_MAX) throw EncodeError("nonce counter exhausted");
  Nonce nonce{};
  for (int i = 0; i < 4; ++i) nonce[i] = static_cast<std::uint8_t>(prefix_ >> (8 * i));
  for (int i = 0; i < 8; ++i) nonce[4 + i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
  ++counter_;
  return nonce;
}

std::vector<std::uint8_t> encode_payload(const Message& message) {
  Writer w;
  std::visit(
      [&w](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Telemetry>) {
          w.u32(m.timestamp_ms);
          for (float v : m.number) w.f32(v);
          for (float v : m.mass) w.f32(v);
          w.f32(m.temperature);
          w.f32(m.rh);
          w.u8(m.risk);
        } else if constexpr (std::is_same_v<T, Status>) {
          w.u8(m.battery_pct);
          w.u8(m.liquid_pct);
          w.u8(m.mode);
          w.u8(m.spraying);
          w.f32(m.cumulative_exposure);
        } else if constexpr (std::is_same_v<T, Alert>) {
          w.u8(m.code);
        } else if constexpr (std::is_same_v<T, Command>) {
          w.u8(m.code);
          w.raw(m.args);
        } else if constexpr (std::is_same_v<T, Ack>) {
          w.u16(m.seq);
          w.u8(m.status);
        }
      },
      message);
  return w.take();
}

std::vector<std::uint8_t> encode_frame(const Message& message, std::uint16_t seq) {
  const auto payload = encode_payload(message);
  if (payload.size() > kMaxPayload) throw EncodeError("payload exceeds 1024 bytes");
  return assemble(message_type(message), 0, seq, payload);
}

std::vector<std::uint8_t> encode_frame(const Message& message, std::uint16_t seq,
                                       SessionKey& key) {
  ensure_sodium();
  const auto plain = encode_payload(message);
  if (plain.size() + kSealOverhead > kMaxPayload) {
    throw EncodeError("sealed payload exceeds 1024 bytes");
  }
  const std::size_t payload_len = plain.size() + kSealOverhead;
  std::array<std::uint8_t, kHeaderSize> header{
      kMagic0,
      kMagic1,
      kVersion,
      static_cast<std::uint8_t>(message_type(message)),
      kFlagEncrypted,
      static_cast<std::uint8_t>(seq),
      static_cast<std::uint8_t>(seq >> 8),
      static_cast<std::uint8_t>(payload_len),
      static_cast<std::uint8_t>(payload_len >> 8)};

  std::vector<std::uint8_t> payload(payload_len);
  const auto nonce = key.next_nonce();
  std::copy(nonce.begin(), nonce.end(), payload.begin());
  unsigned long long sealed_len = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(payload.data() + kNonceSize, &sealed_len,
                                            plain.data(), plain.size(), header.data(),
                                            header.size(), nullptr, nonce.data(),
                                            key.key().data());
  payload.resize(kNonceSize + static_cast<std::size_t>(sealed_len));
  return assemble(message_type(message), kFlagEncrypted, seq, payload);
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) {
  return decode_impl(bytes, nullptr);
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes, const SessionKey& key) {
  return decode_impl(bytes, &key);
}

}  // namespace smartmask::protocol
