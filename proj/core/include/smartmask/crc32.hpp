#pragma once

#include <cstdint>
#include <span>

namespace smartmask::protocol {

// CRC-32 (IEEE 802.3): reflected, polynomial 0x04C11DB7, init and final XOR
// 0xFFFFFFFF. Check value for "123456789" is 0xCBF43926.
std::uint32_t crc32(std::span<const std::uint8_t> data);

// Incremental form: start from 0 and feed successive chunks.
std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> data);

}  // namespace smartmask::protocol
