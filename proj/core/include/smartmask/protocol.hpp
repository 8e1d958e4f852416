#pragma once

// Device <-> application wire format.
//
// Frame layout (all multi-byte fields little-endian):
//
//   offset  size  field
//   0       2     magic 0xA5 0x5A
//   2       1     version (1)
//   3       1     msg_type
//   4       1     flags (bit 0 = encrypted)
//   5       2     seq
//   7       2     payload_len (<= 1024)
//   9       n     payload
//   9+n     4     crc32 over bytes [0, 9+n)
//
// Encrypted payloads are nonce(12) || ciphertext || tag(16), sealed with
// ChaCha20-Poly1305 (IETF) using the 9 header bytes as associated data.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

namespace smartmask::protocol {

inline constexpr std::uint8_t kMagic0 = 0xA5;
inline constexpr std::uint8_t kMagic1 = 0x5A;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 9;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::size_t kMaxPayload = 1024;
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kKeySize = 32;
inline constexpr std::uint8_t kFlagEncrypted = 0x01;
inline constexpr std::size_t kPmBins = 5;

enum class MessageType : std::uint8_t {
  telemetry = 1,
  status = 2,
  alert = 3,
  command = 4,
  ack = 5,
};

enum class CommandCode : std::uint8_t {
  set_mode = 1,
  spray_on = 2,
  spray_off = 3,
  ack_alert = 4,
  set_params = 5,
};

enum class AlertCode : std::uint8_t { recharge = 1, refill = 2, decontaminate = 3 };

enum class AckStatus : std::uint8_t {
  ok = 0,
  rejected = 1,
  malformed = 2,
  unsupported = 3,
};

struct Telemetry {
  std::uint32_t timestamp_ms = 0;
  std::array<float, kPmBins> number{};
  std::array<float, kPmBins> mass{};
  float temperature = 0.0f;
  float rh = 0.0f;
  std::uint8_t risk = 0;

  friend bool operator==(const Telemetry&, const Telemetry&) = default;
};

struct Status {
  std::uint8_t battery_pct = 0;
  std::uint8_t liquid_pct = 0;
  std::uint8_t mode = 0;
  std::uint8_t spraying = 0;
  float cumulative_exposure = 0.0f;

  friend bool operator==(const Status&, const Status&) = default;
};

struct Alert {
  std::uint8_t code = 0;

  friend bool operator==(const Alert&, const Alert&) = default;
};

// The code is kept raw so that unknown codes reach the controller and are
// answered with an ACK instead of being dropped at the framing layer.
struct Command {
  std::uint8_t code = 0;
  std::vector<std::uint8_t> args;

  friend bool operator==(const Command&, const Command&) = default;
};

struct Ack {
  std::uint16_t seq = 0;
  std::uint8_t status = 0;

  friend bool operator==(const Ack&, const Ack&) = default;
};

using Message = std::variant<Telemetry, Status, Alert, Command, Ack>;

MessageType message_type(const Message& message);
std::string_view to_string(MessageType type);

// Typed command arguments.
struct SprayOnArgs {
  float intensity = 0.0f;     // 0 = controller default
  float duration = 0.0f;      // 0 = controller default
  float angle_factor = 0.0f;  // 0 = controller default
  friend bool operator==(const SprayOnArgs&, const SprayOnArgs&) = default;
};

struct SetParamsArgs {
  float spray_duration = 15.0f;
  float intensity_high = 0.7f;
  float intensity_very_high = 1.0f;
  float cooldown = 10.0f;
  friend bool operator==(const SetParamsArgs&, const SetParamsArgs&) = default;
};

Command make_set_mode(std::uint8_t mode);
Command make_spray_on(std::optional<SprayOnArgs> args = std::nullopt);
Command make_spray_off();
Command make_ack_alert(AlertCode code);
Command make_set_params(const SetParamsArgs& args);

// nullopt when the argument bytes do not match the code's layout.
std::optional<std::uint8_t> parse_set_mode(const Command& command);
std::optional<SprayOnArgs> parse_spray_on(const Command& command);
std::optional<AlertCode> parse_ack_alert(const Command& command);
std::optional<SetParamsArgs> parse_set_params(const Command& command);

// 256-bit pre-shared key plus a 96-bit nonce counter (32-bit sender prefix,
// 64-bit sequence). Each direction of a link uses its own prefix so the two
// ends never emit the same nonce.
class SessionKey {
 public:
  using KeyBytes = std::array<std::uint8_t, kKeySize>;
  using Nonce = std::array<std::uint8_t, kNonceSize>;

  explicit SessionKey(const KeyBytes& key, std::uint32_t nonce_prefix = 0);
  // Parses 64 hex characters.
  static SessionKey from_hex(std::string_view hex, std::uint32_t nonce_prefix = 0);

  const KeyBytes& key() const noexcept { return key_; }
  std::uint32_t nonce_prefix() const noexcept { return prefix_; }
  std::uint64_t counter() const noexcept { return counter_; }

  // Returns the next unused nonce and advances the counter.
  Nonce next_nonce();

 private:
  KeyBytes key_;
  std::uint32_t prefix_;
  std::uint64_t counter_ = 0;
};

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DecodeError {
  incomplete,   // not enough bytes yet; keep them and retry
  framing,      // bad magic, version, flags or length field
  integrity,    // CRC mismatch
  security,     // authentication failed or key/encryption mismatch
  unsupported,  // unknown message type
  malformed,    // payload does not match the message layout
};

std::string_view to_string(DecodeError error);

struct DecodedFrame {
  Message message;
  std::uint16_t seq = 0;
  bool encrypted = false;
  std::optional<SessionKey::Nonce> nonce;
  std::size_t frame_size = 0;
};

using DecodeResult = std::variant<DecodedFrame, DecodeError>;

std::vector<std::uint8_t> encode_payload(const Message& message);

std::vector<std::uint8_t> encode_frame(const Message& message, std::uint16_t seq);
std::vector<std::uint8_t> encode_frame(const Message& message, std::uint16_t seq,
                                       SessionKey& key);

// Decodes the frame at the start of `bytes`. With a key, only encrypted
// frames are accepted.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);
DecodeResult decode_frame(std::span<const std::uint8_t> bytes, const SessionKey& key);

}  // namespace smartmask::protocol
