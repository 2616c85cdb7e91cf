#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace pwrap {

// CRC-32 (IEEE 802.3 generator 0x04C11DB7), reflected in/out.
namespace crc_detail {

inline constexpr std::uint32_t kReflectedPoly = 0xEDB88320u;

constexpr std::array<std::uint32_t, 256> make_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1u) ? (c >> 1) ^ kReflectedPoly : (c >> 1);
        table[i] = c;
    }
    return table;
}

inline constexpr auto kTable = make_table();

}  // namespace crc_detail

/// Runs the table-driven register over `bytes` starting from `state`.
/// No init or final xor is applied; use crc32() for the standard check value.
constexpr std::uint32_t crc32_update(std::uint32_t state, std::span<const std::uint8_t> bytes) {
    for (std::uint8_t b : bytes) state = crc_detail::kTable[(state ^ b) & 0xFFu] ^ (state >> 8);
    return state;
}

constexpr std::uint32_t crc32_with(std::span<const std::uint8_t> bytes, std::uint32_t init,
                                   std::uint32_t xor_out) {
    return crc32_update(init, bytes) ^ xor_out;
}

constexpr std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    return crc32_with(bytes, 0xFFFFFFFFu, 0xFFFFFFFFu);
}

}  // namespace pwrap
