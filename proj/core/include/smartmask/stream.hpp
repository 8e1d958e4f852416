#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace smartmask::protocol {

using FrameBytes = std::vector<std::uint8_t>;

struct Reassembled {
  std::vector<FrameBytes> frames;      // complete, CRC-valid frames in order
  std::vector<std::uint8_t> remainder;  // trailing partial frame, if any
};

// Extracts every complete frame from `buffer`. Bytes that cannot begin a
// valid frame are skipped one at a time until the magic pair lines up again.
// Authentication is left to decode_frame.
Reassembled stream_reassemble(std::span<const std::uint8_t> buffer);

// Stateful wrapper that keeps the remainder between reads.
class StreamReassembler {
 public:
  std::vector<FrameBytes> feed(std::span<const std::uint8_t> bytes);
  const std::vector<std::uint8_t>& pending() const noexcept { return pending_; }
  // Bytes discarded while resynchronising.
  std::size_t skipped() const noexcept { return skipped_; }

 private:
  std::vector<std::uint8_t> pending_;
  std::size_t skipped_ = 0;
};

}  // namespace smartmask::protocol
