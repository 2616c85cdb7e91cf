#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pwrap/tlp.hpp"

namespace pwrap {

/// One 64-bit datapath word with packet markers. The first DW of a pair sits
/// in the low half. `high_dw_valid` is false only on an eof word that carries
/// a single DW.
struct FramedWord {
    std::uint64_t data = 0;
    bool sof = false;
    bool eof = false;
    bool high_dw_valid = true;

    std::uint32_t low_dw() const { return static_cast<std::uint32_t>(data); }
    std::uint32_t high_dw() const { return static_cast<std::uint32_t>(data >> 32); }

    bool operator==(const FramedWord&) const = default;
};

/// A FIFO port word of 1, 2 or 4 DW lanes. Lanes past `valid_dw` are padding
/// and only occur on eof beats.
struct Beat {
    std::array<std::uint32_t, 4> dw{};
    std::uint8_t lanes = 2;
    std::uint8_t valid_dw = 2;
    bool sof = false;
    bool eof = false;

    bool operator==(const Beat&) const = default;
};

inline Beat to_beat(const FramedWord& w) {
    Beat b;
    b.lanes = 2;
    b.dw[0] = w.low_dw();
    b.dw[1] = w.high_dw();
    b.valid_dw = (w.eof && !w.high_dw_valid) ? 1 : 2;
    b.sof = w.sof;
    b.eof = w.eof;
    return b;
}

inline FramedWord to_framed(const Beat& b) {
    FramedWord w;
    w.data = std::uint64_t{b.dw[0]} | (b.lanes > 1 ? std::uint64_t{b.dw[1]} << 32 : 0);
    w.sof = b.sof;
    w.eof = b.eof;
    w.high_dw_valid = !(b.eof && b.valid_dw < 2);
    return w;
}

/// Packs DWs into beats of `lanes` DWs each, sof on the first and eof on the last.
inline std::vector<Beat> frame_beats(std::span<const std::uint32_t> dws, std::size_t lanes) {
    std::vector<Beat> out;
    out.reserve((dws.size() + lanes - 1) / lanes);
    for (std::size_t i = 0; i < dws.size(); i += lanes) {
        Beat b;
        b.lanes = static_cast<std::uint8_t>(lanes);
        const std::size_t n = std::min(lanes, dws.size() - i);
        for (std::size_t k = 0; k < n; ++k) b.dw[k] = dws[i + k];
        b.valid_dw = static_cast<std::uint8_t>(n);
        b.sof = i == 0;
        b.eof = i + lanes >= dws.size();
        out.push_back(b);
    }
    return out;
}

inline std::vector<FramedWord> frame(std::span<const std::uint32_t> dws) {
    std::vector<FramedWord> out;
    out.reserve((dws.size() + 1) / 2);
    for (const Beat& b : frame_beats(dws, 2)) out.push_back(to_framed(b));
    return out;
}

/// Header length matches the DW count and the digest, if any, checks out.
inline bool span_intact(std::span<const std::uint32_t> dws) {
    if (dws.size() < 3) return false;
    const auto expect = packet_dw_from_header(dws[0]);
    if (!expect || *expect != dws.size()) return false;
    return verify_digest(dws);
}

struct DeframeDiagnostics {
    std::size_t resync_discards = 0;  // beats seen outside any sof..eof span
    std::size_t corrupted = 0;        // spans flagged (length/digest mismatch, or cut short by a sof)
    std::size_t truncated = 0;        // span still open at end of stream

    bool clean() const { return resync_discards == 0 && corrupted == 0 && truncated == 0; }
    bool operator==(const DeframeDiagnostics&) const = default;
};

struct AssembledPacket {
    std::vector<std::uint32_t> dws;
    bool corrupted = false;
};

/// Incremental sof/eof span scanner. Feed beats in order; completed spans are
/// handed to the sink as AssembledPacket.
class PacketAssembler {
public:
    template <class Sink>
    void push(const Beat& b, Sink&& sink) {
        if (b.sof) {
            if (open_) {
                ++diag_.corrupted;
                sink(AssembledPacket{std::move(current_), true});
                current_.clear();
            }
            open_ = true;
        } else if (!open_) {
            ++diag_.resync_discards;
            return;
        }
        for (std::size_t k = 0; k < b.valid_dw; ++k) current_.push_back(b.dw[k]);
        if (b.eof) {
            open_ = false;
            const bool bad = !span_intact(current_);
            if (bad) ++diag_.corrupted;
            sink(AssembledPacket{std::move(current_), bad});
            current_.clear();
        }
    }

    bool open() const { return open_; }
    std::size_t open_dw() const { return current_.size(); }
    const DeframeDiagnostics& diagnostics() const { return diag_; }

    /// Closes the stream; an open span counts as truncated.
    void finish() {
        if (open_) ++diag_.truncated;
        open_ = false;
        current_.clear();
    }

private:
    std::vector<std::uint32_t> current_;
    bool open_ = false;
    DeframeDiagnostics diag_;
};

struct DeframeResult {
    std::vector<std::vector<std::uint32_t>> packets;
    DeframeDiagnostics diagnostics;
};

/// Splits a framed stream back into packets. Corrupted spans are dropped and
/// counted; scanning resumes at the next sof.
inline DeframeResult deframe(std::span<const FramedWord> stream) {
    DeframeResult r;
    PacketAssembler asm_;
    for (const FramedWord& w : stream) {
        asm_.push(to_beat(w), [&](AssembledPacket&& p) {
            if (!p.corrupted) r.packets.push_back(std::move(p.dws));
        });
    }
    asm_.finish();
    r.diagnostics = asm_.diagnostics();
    return r;
}

}  // namespace pwrap
