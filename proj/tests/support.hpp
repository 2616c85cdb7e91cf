#pragma once

// Shared generators and reference models for the test suites. Nothing here
// calls into the code paths it is used to check.

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "pwrap/tlp.hpp"

namespace pwrap::testing {

inline std::uint32_t rand_u32(std::mt19937_64& rng) { return static_cast<std::uint32_t>(rng()); }

inline std::uint64_t rand_below(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

/// Random TLP satisfying every Tlp invariant. `max_len` bounds length_dw.
inline Tlp random_tlp(std::mt19937_64& rng, std::uint16_t max_len = 1024) {
    Tlp t;
    const int pick = static_cast<int>(rand_below(rng, 7));
    t.kind = static_cast<TlpKind>(pick);
    t.traffic_class = static_cast<std::uint8_t>(rand_below(rng, 8));
    t.length_dw = static_cast<std::uint16_t>(1 + rand_below(rng, max_len));
    t.digest = rand_below(rng, 2) == 1;
    if (t.kind == TlpKind::Raw) {
        // Message TLP type (10110) with random routing bits; unmodeled, so it decodes to Raw.
        const std::uint32_t fmt = static_cast<std::uint32_t>(rand_below(rng, 4));
        const std::uint32_t len = t.length_dw & 0x3FFu;
        const std::uint32_t dw0 = (fmt << 29) | ((0x10u | static_cast<std::uint32_t>(rand_below(rng, 8))) << 24) |
                                  (std::uint32_t{t.traffic_class} << 20) | (std::uint32_t{t.digest} << 15) | len;
        std::size_t n = (fmt & 1u) ? 4 : 3;
        if (fmt & 2u) n += t.length_dw;
        if (t.digest) n += 1;
        t.raw.push_back(dw0);
        while (t.raw.size() < n) t.raw.push_back(rand_u32(rng));
        t.first_be = 0;
        t.requester_id = 0;
        return t;
    }
    if (is_completion(t.kind)) {
        t.first_be = 0;
        t.completer_id = static_cast<std::uint16_t>(rng());
        t.cpl_status = static_cast<std::uint8_t>(rand_below(rng, 8));
        t.byte_count = static_cast<std::uint16_t>(rand_below(rng, 0x1000));
        t.requester_id = static_cast<std::uint16_t>(rng());
        t.tag = static_cast<std::uint8_t>(rng());
        t.lower_address = static_cast<std::uint8_t>(rand_below(rng, 0x80));
    } else {
        t.requester_id = static_cast<std::uint16_t>(rng());
        t.tag = static_cast<std::uint8_t>(rng());
        t.first_be = static_cast<std::uint8_t>(rand_below(rng, 16));
        t.last_be = static_cast<std::uint8_t>(rand_below(rng, 16));
        t.address = is_64bit_address(t.kind) ? (rng() & ~0x3ull) : (rng() & 0xFFFFFFFCull);
    }
    if (carries_payload(t.kind)) {
        t.payload.resize(t.length_dw);
        for (auto& d : t.payload) d = rand_u32(rng);
    }
    return t;
}

/// Random encoded packet (known kinds only, payload up to `max_len` DWs).
inline std::vector<std::uint32_t> random_packet(std::mt19937_64& rng, std::uint16_t max_len, bool digest) {
    Tlp t;
    do {
        t = random_tlp(rng, max_len);
    } while (t.kind == TlpKind::Raw);
    t.digest = digest;
    return encode_tlp(t);
}

/// Bitwise (table-free) CRC-32, reflected, for cross-checking.
inline std::uint32_t crc32_bitwise(const std::vector<std::uint8_t>& bytes, std::uint32_t init = 0xFFFFFFFFu,
                                   std::uint32_t xor_out = 0xFFFFFFFFu) {
    std::uint32_t crc = init;
    for (std::uint8_t b : bytes) {
        for (int i = 0; i < 8; ++i) {
            const bool bit = ((crc ^ (b >> i)) & 1u) != 0;
            crc >>= 1;
            if (bit) crc ^= 0xEDB88320u;
        }
    }
    return crc ^ xor_out;
}

}  // namespace pwrap::testing
