#include "smartmask/stream.hpp"

#include "smartmask/crc32.hpp"
#include "smartmask/protocol.hpp"

namespace smartmask::protocol {

namespace {

enum class Candidate { valid, partial, invalid };

// Checks whether a frame can start at `at`. Sets `size` when complete.
Candidate inspect(std::span<const std::uint8_t> data, std::size_t at, std::size_t& size) {
  const auto view = data.subspan(at);
  const std::size_t header_bytes = std::min(view.size(), kHeaderSize);
  if (header_bytes >= 1 && view[0] != kMagic0) return Candidate::invalid;
  if (header_bytes >= 2 && view[1] != kMagic1) return Candidate::invalid;
  if (header_bytes >= 3 && view[2] != kVersion) return Candidate::invalid;
  if (header_bytes >= 4 && (view[3] < 1 || view[3] > 5)) return Candidate::invalid;
  if (header_bytes >= 5 && (view[4] & ~kFlagEncrypted) != 0) return Candidate::invalid;
  if (header_bytes < kHeaderSize) return Candidate::partial;

  const std::size_t payload_len = static_cast<std::size_t>(view[7] | (view[8] << 8));
  if (payload_len > kMaxPayload) return Candidate::invalid;
  const std::size_t total = kHeaderSize + payload_len + kCrcSize;
  if (view.size() < total) return Candidate::partial;

  const auto trailer = view.subspan(kHeaderSize + payload_len, kCrcSize);
  const std::uint32_t wire_crc = static_cast<std::uint32_t>(trailer[0]) |
                                 static_cast<std::uint32_t>(trailer[1]) << 8 |
                                 static_cast<std::uint32_t>(trailer[2]) << 16 |
                                 static_cast<std::uint32_t>(trailer[3]) << 24;
  if (crc32(view.first(kHeaderSize + payload_len)) != wire_crc) return Candidate::invalid;
  size = total;
  return Candidate::valid;
}

}  // namespace

Reassembled stream_reassemble(std::span<const std::uint8_t> buffer) {
  Reassembled out;
  std::size_t pos = 0;
  while (pos < buffer.size()) {
    std::size_t size = 0;
    const Candidate c = inspect(buffer, pos, size);
    if (c == Candidate::valid) {
      out.frames.emplace_back(buffer.begin() + static_cast<std::ptrdiff_t>(pos),
                              buffer.begin() + static_cast<std::ptrdiff_t>(pos + size));
      pos += size;
    } else if (c == Candidate::partial) {
      break;
    } else {
      ++pos;
    }
  }
  out.remainder.assign(buffer.begin() + static_cast<std::ptrdiff_t>(pos), buffer.end());
  return out;
}

std::vector<FrameBytes> StreamReassembler::feed(std::span<const std::uint8_t> bytes) {
  pending_.insert(pending_.end(), bytes.begin(), bytes.end());
  const std::size_t before = pending_.size();
  auto result = stream_reassemble(pending_);
  std::size_t consumed = before - result.remainder.size();
  for (const auto& f : result.frames) consumed -= f.size();
  skipped_ += consumed;
  pending_ = std::move(result.remainder);
  return std::move(result.frames);
}

}  // namespace smartmask::protocol
