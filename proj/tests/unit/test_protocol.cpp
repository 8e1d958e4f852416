#include <cstring>
#include <string_view>

#include <gtest/gtest.h>

#include "properties.hpp"
#include "smartmask/crc32.hpp"
#include "smartmask/protocol.hpp"
#include "smartmask/stream.hpp"

namespace smartmask::protocol {
namespace {

std::span<const std::uint8_t> ascii(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Bitwise reference CRC-32 (reflected, polynomial 0xEDB88320).
std::uint32_t crc_oracle(std::span<const std::uint8_t> data) {
  std::uint32_t crc = 0xffffffffu;
  for (const auto byte : data) {
    crc ^= byte;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

SessionKey::KeyBytes fixed_key(std::uint8_t fill) {
  SessionKey::KeyBytes k{};
  k.fill(fill);
  return k;
}

DecodeError error_of(const DecodeResult& r) {
  EXPECT_TRUE(std::holds_alternative<DecodeError>(r));
  return std::get<DecodeError>(r);
}

TEST(Crc32, CheckValue) {
  EXPECT_EQ(crc32(ascii("123456789")), 0xCBF43926u);
  EXPECT_EQ(crc32({}), 0u);
}

TEST(Crc32, MatchesBitwiseReference) {
  testing::Gen gen(41);
  for (int i = 0; i < 200; ++i) {
    const auto data = gen.bytes(gen.integer<std::size_t>(0, 300));
    EXPECT_EQ(crc32(data), crc_oracle(data));
    const auto split = gen.integer<std::size_t>(0, data.size());
    const auto partial = crc32_update(crc32_update(0, std::span(data).first(split)),
                                      std::span(data).subspan(split));
    EXPECT_EQ(partial, crc32(data));
  }
}

TEST(Frame, AlertLayoutIsBitExact) {
  const auto frame = encode_frame(Alert{1}, 7);
  const std::vector<std::uint8_t> header{0xA5, 0x5A, 0x01, 0x03, 0x00, 0x07, 0x00, 0x01, 0x00, 0x01};
  ASSERT_EQ(frame.size(), header.size() + 4);
  EXPECT_TRUE(std::equal(header.begin(), header.end(), frame.begin()));
  const std::uint32_t crc = crc_oracle(std::span(frame).first(header.size()));
  EXPECT_EQ(frame[10], crc & 0xff);
  EXPECT_EQ(frame[13], crc >> 24);
  const auto decoded = std::get<DecodedFrame>(decode_frame(frame));
  EXPECT_EQ(std::get<Alert>(decoded.message).code, 1);
  EXPECT_EQ(decoded.seq, 7);
}

TEST(Frame, TelemetryPayloadLayout) {
  Telemetry t;
  t.timestamp_ms = 0x01020304;
  t.number = {1.0f, 2.0f, 3.0f, 4.0f, 5.0f};
  t.rh = 45.5f;
  t.risk = 2;
  const auto payload = encode_payload(t);
  ASSERT_EQ(payload.size(), 4u + 5 * 4 + 5 * 4 + 4 + 4 + 1);
  EXPECT_EQ(payload[0], 0x04);
  EXPECT_EQ(payload[3], 0x01);
  float first = 0.0f;
  std::memcpy(&first, payload.data() + 4, 4);  // host is little-endian here
  EXPECT_EQ(first, 1.0f);
  EXPECT_EQ(payload.back(), 2);
}

TEST(Frame, FixedPayloadSizes) {
  EXPECT_EQ(encode_payload(Status{}).size(), 8u);
  EXPECT_EQ(encode_payload(Ack{}).size(), 3u);
  EXPECT_EQ(encode_payload(make_spray_off()).size(), 1u);
  EXPECT_EQ(encode_payload(make_set_mode(1)).size(), 2u);
}

TEST(Frame, EmptyAndTruncatedInputIncomplete) {
  EXPECT_EQ(error_of(decode_frame({})), DecodeError::incomplete);
  const auto frame = encode_frame(Status{}, 1);
  EXPECT_EQ(error_of(decode_frame(std::span(frame).first(frame.size() - 1))), DecodeError::incomplete);
}

TEST(Frame, ErrorClasses) {
  auto frame = encode_frame(Ack{5, 0}, 9);
  auto bad_magic = frame;
  bad_magic[0] = 0x00;
  EXPECT_EQ(error_of(decode_frame(bad_magic)), DecodeError::framing);
  auto bad_crc = frame;
  bad_crc[10] ^= 0x01;
  EXPECT_EQ(error_of(decode_frame(bad_crc)), DecodeError::integrity);

  // Unknown type with a correct CRC.
  auto unknown = frame;
  unknown[3] = 0x09;
  const auto crc = crc_oracle(std::span(unknown).first(unknown.size() - 4));
  for (int i = 0; i < 4; ++i) unknown[unknown.size() - 4 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  EXPECT_EQ(error_of(decode_frame(unknown)), DecodeError::unsupported);
}

TEST(Frame, OversizedPayloadRejected) {
  Command big;
  big.code = 5;
  big.args.assign(kMaxPayload, 0);
  EXPECT_THROW(encode_frame(big, 0), EncodeError);
}

TEST(Keyed, RoundTripAndWrongKey) {
  SessionKey sender(fixed_key(1), 5);
  const auto frame = encode_frame(Alert{3}, 11, sender);
  EXPECT_EQ(frame[4] & kFlagEncrypted, kFlagEncrypted);
  const auto ok = decode_frame(frame, SessionKey(fixed_key(1)));
  ASSERT_TRUE(std::holds_alternative<DecodedFrame>(ok));
  EXPECT_EQ(std::get<Alert>(std::get<DecodedFrame>(ok).message).code, 3);
  EXPECT_EQ(error_of(decode_frame(frame, SessionKey(fixed_key(2)))), DecodeError::security);
  // Plain decoder cannot read sealed frames, keyed decoder refuses plaintext.
  EXPECT_EQ(error_of(decode_frame(frame)), DecodeError::security);
  EXPECT_EQ(error_of(decode_frame(encode_frame(Alert{3}, 1), SessionKey(fixed_key(1)))),
            DecodeError::security);
}

TEST(Keyed, NoncesNeverRepeat) {
  SessionKey sender(fixed_key(9), 0x1234);
  const SessionKey receiver(fixed_key(9));
  std::set<SessionKey::Nonce> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto frame = encode_frame(Status{}, static_cast<std::uint16_t>(i), sender);
    const auto decoded = std::get<DecodedFrame>(decode_frame(frame, receiver));
    ASSERT_TRUE(decoded.nonce);
    EXPECT_TRUE(seen.insert(*decoded.nonce).second);
  }
  EXPECT_EQ(sender.counter(), 2000u);
}

TEST(Keyed, KeyFromHex) {
  const auto key = SessionKey::from_hex(std::string(64, 'a'));
  EXPECT_EQ(key.key()[0], 0xaa);
  EXPECT_THROW(SessionKey::from_hex("abc"), std::invalid_argument);
  EXPECT_THROW(SessionKey::from_hex(std::string(64, 'g')), std::invalid_argument);
}

TEST(Commands, TypedArgsRoundTrip) {
  const SprayOnArgs args{0.25f, 12.0f, 0.5f};
  EXPECT_EQ(parse_spray_on(make_spray_on(args)), args);
  EXPECT_EQ(parse_spray_on(make_spray_on()), SprayOnArgs{});
  EXPECT_EQ(parse_set_mode(make_set_mode(1)), 1);
  EXPECT_EQ(parse_ack_alert(make_ack_alert(AlertCode::refill)), AlertCode::refill);
  const SetParamsArgs p{20.0f, 0.6f, 0.9f, 4.0f};
  EXPECT_EQ(parse_set_params(make_set_params(p)), p);
  EXPECT_FALSE(parse_set_mode(make_spray_off()));
}

TEST(Properties, RoundTripUnkeyed) { EXPECT_EQ(testing::round_trips(42, 2000, false), std::nullopt); }

TEST(Properties, RoundTripKeyed) { EXPECT_EQ(testing::round_trips(43, 2000, true), std::nullopt); }

TEST(Properties, TamperRejected) { EXPECT_EQ(testing::tamper_rejection(44, 100), std::nullopt); }

TEST(Properties, Reassembly) { EXPECT_EQ(testing::reassembly(45, 500), std::nullopt); }

TEST(Stream, TwoFramesNoRemainder) {
  auto a = encode_frame(Alert{1}, 1);
  const auto b = encode_frame(Alert{2}, 2);
  a.insert(a.end(), b.begin(), b.end());
  const auto out = stream_reassemble(a);
  EXPECT_EQ(out.frames.size(), 2u);
  EXPECT_TRUE(out.remainder.empty());
}

TEST(Stream, SplitAtEveryBoundary) {
  const auto frame = encode_frame(Telemetry{}, 3);
  for (std::size_t cut = 0; cut <= frame.size(); ++cut) {
    StreamReassembler r;
    auto first = r.feed(std::span(frame).first(cut));
    auto second = r.feed(std::span(frame).subspan(cut));
    EXPECT_EQ(first.size() + second.size(), 1u) << "cut " << cut;
    EXPECT_TRUE(r.pending().empty());
  }
}

TEST(Stream, GarbagePrefixSkipped) {
  std::vector<std::uint8_t> stream{0x00, 0xA5, 0x13, 0xA5, 0x5A, 0x07};
  const auto frame = encode_frame(Alert{2}, 4);
  stream.insert(stream.end(), frame.begin(), frame.end());
  StreamReassembler r;
  const auto frames = r.feed(stream);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0], frame);
  EXPECT_EQ(r.skipped(), 6u);
}

}  // namespace
}  // namespace smartmask::protocol
