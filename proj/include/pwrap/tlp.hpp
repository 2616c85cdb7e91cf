#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pwrap/crc32.hpp"
#include "pwrap/error.hpp"

namespace pwrap {

enum class TlpKind : std::uint8_t { MemWrite32, MemWrite64, MemRead32, MemRead64, CplD, Cpl, Raw };

inline constexpr std::string_view to_string(TlpKind k) {
    switch (k) {
        case TlpKind::MemWrite32: return "MemWrite32";
        case TlpKind::MemWrite64: return "MemWrite64";
        case TlpKind::MemRead32: return "MemRead32";
        case TlpKind::MemRead64: return "MemRead64";
        case TlpKind::CplD: return "CplD";
        case TlpKind::Cpl: return "Cpl";
        case TlpKind::Raw: return "Raw";
    }
    return "?";
}

inline constexpr bool is_write(TlpKind k) { return k == TlpKind::MemWrite32 || k == TlpKind::MemWrite64; }
inline constexpr bool is_read(TlpKind k) { return k == TlpKind::MemRead32 || k == TlpKind::MemRead64; }
inline constexpr bool is_completion(TlpKind k) { return k == TlpKind::CplD || k == TlpKind::Cpl; }
inline constexpr bool carries_payload(TlpKind k) { return is_write(k) || k == TlpKind::CplD; }
inline constexpr bool is_64bit_address(TlpKind k) { return k == TlpKind::MemWrite64 || k == TlpKind::MemRead64; }

inline constexpr std::size_t header_dw_count(TlpKind k) { return is_64bit_address(k) ? 4 : 3; }

/// A decoded transaction layer packet.
///
/// Requests use `requester_id`, `tag`, byte enables and `address`. Completions
/// use the completer fields and carry the original requester's id and tag.
/// `Raw` packets keep every double-word of the original encoding in `raw`.
struct Tlp {
    TlpKind kind = TlpKind::MemWrite32;
    std::uint8_t traffic_class = 0;
    std::uint16_t length_dw = 1;
    std::uint16_t requester_id = 0;
    std::uint8_t tag = 0;
    std::uint8_t first_be = 0xF;
    std::uint8_t last_be = 0;
    std::uint64_t address = 0;
    std::uint16_t completer_id = 0;
    std::uint8_t cpl_status = 0;
    std::uint16_t byte_count = 0;
    std::uint8_t lower_address = 0;
    std::vector<std::uint32_t> payload;
    bool digest = false;
    std::vector<std::uint32_t> raw;

    bool operator==(const Tlp&) const = default;
};

namespace tlp_detail {

inline constexpr std::uint32_t kFmtHasData = 0x2;
inline constexpr std::uint32_t kFmt4Dw = 0x1;
inline constexpr std::uint32_t kTypeMem = 0x00;
inline constexpr std::uint32_t kTypeCpl = 0x0A;

inline constexpr std::uint32_t fmt_of(std::uint32_t dw0) { return (dw0 >> 29) & 0x3u; }
inline constexpr std::uint32_t type_of(std::uint32_t dw0) { return (dw0 >> 24) & 0x1Fu; }
inline constexpr bool reserved_fmt_bit(std::uint32_t dw0) { return (dw0 >> 31) != 0; }
inline constexpr std::uint32_t length_of(std::uint32_t dw0) {
    const std::uint32_t len = dw0 & 0x3FFu;
    return len == 0 ? 1024u : len;
}

inline void append_be_bytes(std::vector<std::uint8_t>& out, std::uint32_t dw) {
    out.push_back(static_cast<std::uint8_t>(dw >> 24));
    out.push_back(static_cast<std::uint8_t>(dw >> 16));
    out.push_back(static_cast<std::uint8_t>(dw >> 8));
    out.push_back(static_cast<std::uint8_t>(dw));
}

}  // namespace tlp_detail

/// End-to-end digest over header and payload, double-words serialized most
/// significant byte first (wire order).
inline std::uint32_t tlp_digest(std::span<const std::uint32_t> dws) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(dws.size() * 4);
    for (std::uint32_t dw : dws) tlp_detail::append_be_bytes(bytes, dw);
    return crc32(bytes);
}

/// Total packet size in double-words implied by header DW0, or nullopt when
/// the reserved format bit is set.
inline std::optional<std::size_t> packet_dw_from_header(std::uint32_t dw0) {
    using namespace tlp_detail;
    if (reserved_fmt_bit(dw0)) return std::nullopt;
    const std::uint32_t fmt = fmt_of(dw0);
    std::size_t total = (fmt & kFmt4Dw) ? 4 : 3;
    if (fmt & kFmtHasData) total += length_of(dw0);
    if ((dw0 >> 15) & 1u) total += 1;
    return total;
}

inline void validate_tlp(const Tlp& t) {
    if (t.kind == TlpKind::Raw) {
        if (t.raw.size() < 3) throw InvalidTlp("raw TLP needs at least 3 DWs");
        const auto expect = packet_dw_from_header(t.raw[0]);
        if (!expect || *expect != t.raw.size()) throw InvalidTlp("raw TLP header length disagrees with DW count");
        return;
    }
    if (t.length_dw < 1 || t.length_dw > 1024) throw InvalidTlp("length_dw out of [1,1024]");
    if (t.traffic_class > 7) throw InvalidTlp("traffic_class out of range");
    if (carries_payload(t.kind)) {
        if (t.payload.size() != t.length_dw) throw InvalidTlp("payload size differs from length_dw");
    } else if (!t.payload.empty()) {
        throw InvalidTlp("payload present on a TLP kind without data");
    }
    if (is_completion(t.kind)) {
        if (t.cpl_status > 7) throw InvalidTlp("cpl_status exceeds 3 bits");
        if (t.byte_count > 0xFFF) throw InvalidTlp("byte_count exceeds 12 bits");
        if (t.lower_address > 0x7F) throw InvalidTlp("lower_address exceeds 7 bits");
        return;
    }
    if (t.first_be > 0xF || t.last_be > 0xF) throw InvalidTlp("byte enable exceeds 4 bits");
    if (t.address & 0x3u) throw InvalidTlp("address not DW aligned");
    if (!is_64bit_address(t.kind) && t.address > 0xFFFFFFFFull)
        throw InvalidTlp("32-bit TLP kind with an address above 4 GiB");
}

inline std::size_t total_length_dw(const Tlp& t) {
    if (t.kind == TlpKind::Raw) return t.raw.size();
    return header_dw_count(t.kind) + (carries_payload(t.kind) ? t.payload.size() : 0) + (t.digest ? 1 : 0);
}

/// Encodes header, payload and (when `digest` is set) a trailing CRC DW.
inline std::vector<std::uint32_t> encode_tlp(const Tlp& t) {
    using namespace tlp_detail;
    validate_tlp(t);
    if (t.kind == TlpKind::Raw) return t.raw;

    std::uint32_t fmt = 0;
    std::uint32_t type = kTypeMem;
    switch (t.kind) {
        case TlpKind::MemRead32: fmt = 0; break;
        case TlpKind::MemRead64: fmt = kFmt4Dw; break;
        case TlpKind::MemWrite32: fmt = kFmtHasData; break;
        case TlpKind::MemWrite64: fmt = kFmtHasData | kFmt4Dw; break;
        case TlpKind::Cpl: fmt = 0; type = kTypeCpl; break;
        case TlpKind::CplD: fmt = kFmtHasData; type = kTypeCpl; break;
        case TlpKind::Raw: break;
    }

    std::vector<std::uint32_t> out;
    out.reserve(total_length_dw(t));
    const std::uint32_t len_field = t.length_dw & 0x3FFu;  // 1024 encodes as 0
    out.push_back((fmt << 29) | (type << 24) | (std::uint32_t{t.traffic_class} << 20) |
                  (std::uint32_t{t.digest} << 15) | len_field);

    if (is_completion(t.kind)) {
        out.push_back((std::uint32_t{t.completer_id} << 16) | (std::uint32_t{t.cpl_status} << 13) |
                      (t.byte_count & 0xFFFu));
        out.push_back((std::uint32_t{t.requester_id} << 16) | (std::uint32_t{t.tag} << 8) |
                      (t.lower_address & 0x7Fu));
    } else {
        out.push_back((std::uint32_t{t.requester_id} << 16) | (std::uint32_t{t.tag} << 8) |
                      (std::uint32_t{t.last_be} << 4) | t.first_be);
        if (is_64bit_address(t.kind)) {
            out.push_back(static_cast<std::uint32_t>(t.address >> 32));
            out.push_back(static_cast<std::uint32_t>(t.address) & ~0x3u);
        } else {
            out.push_back(static_cast<std::uint32_t>(t.address) & ~0x3u);
        }
    }
    if (carries_payload(t.kind)) out.insert(out.end(), t.payload.begin(), t.payload.end());
    if (t.digest) out.push_back(tlp_digest(out));
    return out;
}

/// Header fields only; payload and raw are left empty. Needs the 3 or 4
/// header DWs the format implies (extra DWs are ignored).
inline Tlp decode_header(std::span<const std::uint32_t> dws) {
    using namespace tlp_detail;
    if (dws.size() < 3) throw Truncated("fewer than 3 DWs");
    const std::uint32_t dw0 = dws[0];
    if (reserved_fmt_bit(dw0)) throw MalformedHeader("reserved fmt bit set");
    const std::uint32_t fmt = fmt_of(dw0);
    const std::uint32_t type = type_of(dw0);

    Tlp t;
    t.traffic_class = static_cast<std::uint8_t>((dw0 >> 20) & 0x7u);
    t.digest = ((dw0 >> 15) & 1u) != 0;
    t.length_dw = static_cast<std::uint16_t>(length_of(dw0));

    if (type == kTypeMem) {
        t.kind = fmt == 0 ? TlpKind::MemRead32
               : fmt == kFmt4Dw ? TlpKind::MemRead64
               : fmt == kFmtHasData ? TlpKind::MemWrite32
               : TlpKind::MemWrite64;
    } else if (type == kTypeCpl && fmt == 0) {
        t.kind = TlpKind::Cpl;
    } else if (type == kTypeCpl && fmt == kFmtHasData) {
        t.kind = TlpKind::CplD;
    } else {
        t.kind = TlpKind::Raw;
        t.first_be = 0;
        return t;
    }

    if (is_completion(t.kind)) {
        t.first_be = 0;
        t.completer_id = static_cast<std::uint16_t>(dws[1] >> 16);
        t.cpl_status = static_cast<std::uint8_t>((dws[1] >> 13) & 0x7u);
        t.byte_count = static_cast<std::uint16_t>(dws[1] & 0xFFFu);
        t.requester_id = static_cast<std::uint16_t>(dws[2] >> 16);
        t.tag = static_cast<std::uint8_t>(dws[2] >> 8);
        t.lower_address = static_cast<std::uint8_t>(dws[2] & 0x7Fu);
    } else {
        t.requester_id = static_cast<std::uint16_t>(dws[1] >> 16);
        t.tag = static_cast<std::uint8_t>(dws[1] >> 8);
        t.last_be = static_cast<std::uint8_t>((dws[1] >> 4) & 0xFu);
        t.first_be = static_cast<std::uint8_t>(dws[1] & 0xFu);
        if (is_64bit_address(t.kind)) {
            if (dws.size() < 4) throw Truncated("4-DW header cut short");
            t.address = (std::uint64_t{dws[2]} << 32) | (dws[3] & ~0x3u);
        } else {
            t.address = dws[2] & ~0x3u;
        }
    }
    return t;
}

/// Inverse of encode_tlp. The digest DW, when present, is not checked here;
/// see verify_digest().
inline Tlp decode_tlp(std::span<const std::uint32_t> dws) {
    using namespace tlp_detail;
    if (dws.size() < 3) throw Truncated("fewer than 3 DWs");
    const std::uint32_t dw0 = dws[0];
    if (reserved_fmt_bit(dw0)) throw MalformedHeader("reserved fmt bit set");
    const std::size_t expect = *packet_dw_from_header(dw0);
    if (dws.size() < expect) throw Truncated("header implies " + std::to_string(expect) + " DWs, got " +
                                             std::to_string(dws.size()));
    if (dws.size() > expect) throw MalformedHeader("trailing DWs beyond header length");

    Tlp t = decode_header(dws);
    if (t.kind == TlpKind::Raw) {
        t.raw.assign(dws.begin(), dws.end());
        return t;
    }
    const std::size_t hdr = header_dw_count(t.kind);
    if (carries_payload(t.kind)) t.payload.assign(dws.begin() + hdr, dws.begin() + hdr + t.length_dw);
    return t;
}

/// True when the packet has no digest, or its trailing CRC matches.
inline bool verify_digest(std::span<const std::uint32_t> dws) {
    if (dws.empty() || ((dws[0] >> 15) & 1u) == 0) return true;
    return tlp_digest(dws.first(dws.size() - 1)) == dws.back();
}

}  // namespace pwrap
