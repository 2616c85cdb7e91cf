#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "pwrap/error.hpp"
#include "pwrap/flow_control.hpp"
#include "pwrap/packet_fifo.hpp"
#include "pwrap/stream.hpp"
#include "pwrap/tlp.hpp"

namespace pwrap {

using KindSet = std::uint8_t;

inline constexpr KindSet kind_bit(TlpKind k) { return static_cast<KindSet>(1u << static_cast<unsigned>(k)); }
inline constexpr KindSet kWriteKinds = kind_bit(TlpKind::MemWrite32) | kind_bit(TlpKind::MemWrite64);
inline constexpr KindSet kReadKinds = kind_bit(TlpKind::MemRead32) | kind_bit(TlpKind::MemRead64);
inline constexpr KindSet kCompletionKinds = kind_bit(TlpKind::CplD) | kind_bit(TlpKind::Cpl);
inline constexpr KindSet kAllKinds = 0x7F;

struct RouteEntry {
    std::uint64_t addr_lo = 0;
    std::uint64_t addr_hi = 0;
    KindSet kinds = kAllKinds;
    std::size_t fifo_index = 0;
    bool operator==(const RouteEntry&) const = default;
};

struct RouteTable {
    std::vector<RouteEntry> entries;
    bool default_discard = true;
    std::size_t special_fifo = 0;  // used when default_discard is false
    bool operator==(const RouteTable&) const = default;
};

inline void validate(const RouteTable& t, std::size_t n_fifos) {
    for (std::size_t i = 0; i < t.entries.size(); ++i) {
        const auto& e = t.entries[i];
        if (e.addr_lo > e.addr_hi) throw ConfigError("route " + std::to_string(i) + ": addr_lo above addr_hi");
        if (e.fifo_index >= n_fifos) throw ConfigError("route " + std::to_string(i) + ": fifo index out of range");
        if (e.kinds == 0) throw ConfigError("route " + std::to_string(i) + ": empty kind set");
    }
    if (!t.default_discard && t.special_fifo >= n_fifos) throw ConfigError("route default: fifo index out of range");
}

enum class RouteAction { Fifo, Discard, Special };

struct RouteDecision {
    RouteAction action = RouteAction::Discard;
    std::size_t fifo_index = 0;
    bool operator==(const RouteDecision&) const = default;
};

/// First entry whose kind set holds the TLP kind and whose window holds its
/// address wins. Completions and unmodeled (Raw) TLPs carry no destination
/// address and match on kind alone.
inline RouteDecision rx_route(const Tlp& h, const RouteTable& table) {
    const KindSet bit = kind_bit(h.kind);
    const bool addressless = is_completion(h.kind) || h.kind == TlpKind::Raw;
    for (const auto& e : table.entries) {
        if (!(e.kinds & bit)) continue;
        if (addressless || (h.address >= e.addr_lo && h.address <= e.addr_hi))
            return {RouteAction::Fifo, e.fifo_index};
    }
    if (table.default_discard) return {RouteAction::Discard, 0};
    return {RouteAction::Special, table.special_fifo};
}

enum class RxFsm { Idle, CaptureHdr, Stream, Discard };

inline constexpr std::string_view to_string(RxFsm s) {
    switch (s) {
        case RxFsm::Idle: return "idle";
        case RxFsm::CaptureHdr: return "capture_hdr";
        case RxFsm::Stream: return "stream";
        case RxFsm::Discard: return "discard";
    }
    return "?";
}

enum class RxDiscipline { SpaceCount, Threshold };

struct RxStats {
    std::uint64_t offered = 0;                 // sof words accepted from the link
    std::vector<std::uint64_t> delivered;      // packets fully written, per FIFO
    std::uint64_t discarded = 0;               // routed to Discard, or malformed
    std::uint64_t malformed = 0;
    std::uint64_t protocol_violations = 0;
    std::uint64_t throttle_edges = 0;          // edges with link_ready low
    std::uint64_t rejected_writes = 0;         // must stay 0
    std::uint64_t payload_bits = 0;            // write payload handed to FIFOs

    std::uint64_t delivered_total() const {
        std::uint64_t n = 0;
        for (auto d : delivered) n += d;
        return n;
    }
};

/// Per-packet edge indices, for cut-through checks.
struct RxTiming {
    std::uint64_t sof_edge = 0;
    std::uint64_t first_write_edge = 0;
    std::uint64_t eof_edge = 0;
    std::size_t words = 0;
};

/// RX handler: captures the first two QWs of each packet, routes on the
/// decoded header and streams the packet into the selected FIFO while the
/// rest is still arriving.
///
///   Idle       --sof-->              CaptureHdr (or route at once on sof+eof)
///   CaptureHdr --2nd QW or eof-->    Stream | Discard (| Idle if eof seen)
///   Stream     --eof-->              Idle
///   Discard    --eof-->              Idle
///
/// Up to two words wait in a pending buffer. The first one is written on the
/// edge the route is decided, at most one per edge after that. Link ready is
/// deasserted while the buffer is full, which covers the case of a FIFO that
/// cannot take the next packet yet.
class RxHandler : public Component {
public:
    RxHandler(StreamChannel& in, std::vector<PacketFifo*> fifos, RouteTable table,
              RxDiscipline discipline = RxDiscipline::SpaceCount)
        : in_(in), fifos_(std::move(fifos)), table_(std::move(table)), discipline_(discipline) {
        validate(table_, fifos_.size());
        for (const PacketFifo* f : fifos_) {
            if (f->config().write_width_bits != 64)
                throw ConfigError(f->name() + ": RX FIFO write port must be 64 bits wide");
        }
        stats_.delivered.assign(fifos_.size(), 0);
    }

    void record_timing(bool on) { record_timing_ = on; }

    void evaluate(TimePs) override {
        ++edge_;
        if (!in_.ready.get()) ++stats_.throttle_edges;
        if (in_.transfer()) accept(*in_.data.get());
        drain_one();
        in_.ready.set(pending_.size() <= 1);
    }

    void commit(TimePs) override { in_.ready.commit(); }

    RxFsm state() const { return fsm_; }
    const RxStats& stats() const { return stats_; }
    const std::vector<RxTiming>& timings() const { return timings_; }
    std::size_t pending_words() const { return pending_.size(); }
    bool idle() const { return fsm_ == RxFsm::Idle && pending_.empty(); }
    std::uint64_t edges() const { return edge_; }
    const RouteTable& table() const { return table_; }

private:
    struct Pending {
        FramedWord word;
        std::uint64_t packet = 0;
        bool first = false;
        std::optional<std::size_t> dest;  // unset until routed
        std::size_t packet_words = 0;     // reservation, on the first word
        bool last = false;                // closes the packet
        std::uint32_t payload_bits = 0;
    };

    void accept(const FramedWord& w) {
        if (w.sof && fsm_ != RxFsm::Idle) {
            ++stats_.protocol_violations;
            abandon();
        }
        switch (fsm_) {
            case RxFsm::Idle:
                if (!w.sof) {
                    ++stats_.protocol_violations;
                    return;
                }
                start(w);
                return;
            case RxFsm::CaptureHdr:
                capture(w);
                return;
            case RxFsm::Stream:
                ++words_in_;
                pending_.push_back({w, packet_, false, dest_, 0, false, 0});
                if (w.eof) finish_stream();
                return;
            case RxFsm::Discard:
                if (w.eof) {
                    ++stats_.discarded;
                    fsm_ = RxFsm::Idle;
                }
                return;
        }
    }

    void start(const FramedWord& w) {
        ++stats_.offered;
        ++packet_;
        hdr_.clear();
        eof_seen_ = false;
        dest_.reset();
        if (record_timing_) timings_.push_back({edge_, 0, 0, 0});
        words_in_ = 0;
        fsm_ = RxFsm::CaptureHdr;
        capture(w);
    }

    void capture(const FramedWord& w) {
        ++words_in_;
        pending_.push_back({w, packet_, w.sof, std::nullopt, 0, false, 0});
        hdr_.push_back(w.low_dw());
        if (!w.eof || w.high_dw_valid) hdr_.push_back(w.high_dw());
        if (w.eof) eof_seen_ = true;
        if (hdr_.size() >= 4 || w.eof) decide();
    }

    void decide() {
        std::optional<Tlp> h;
        std::size_t total_dw = 0;
        if (hdr_.size() >= 3) {
            try {
                h = decode_header(hdr_);
                total_dw = *packet_dw_from_header(hdr_[0]);
            } catch (const Error&) {
                h.reset();
            }
        }
        RouteDecision d{RouteAction::Discard, 0};
        if (!h) {
            ++stats_.malformed;
        } else {
            d = rx_route(*h, table_);
            if (d.action != RouteAction::Discard &&
                words_for(total_dw, 2) > fifos_[d.fifo_index]->config().depth_write_words) {
                ++stats_.malformed;  // could never fit
                d = {RouteAction::Discard, 0};
            }
        }
        if (d.action == RouteAction::Discard) {
            while (!pending_.empty() && pending_.back().packet == packet_ && !pending_.back().dest)
                pending_.pop_back();
            if (eof_seen_) {
                ++stats_.discarded;
                fsm_ = RxFsm::Idle;
            } else {
                fsm_ = RxFsm::Discard;
            }
            return;
        }
        dest_ = d.fifo_index;
        for (auto& p : pending_) {
            if (p.packet != packet_) continue;
            p.dest = dest_;
            if (p.first) p.packet_words = words_for(total_dw, 2);
        }
        payload_bits_ = is_write(h->kind) ? std::uint32_t{h->length_dw} * 32 : 0;
        if (eof_seen_) finish_stream();
        else fsm_ = RxFsm::Stream;
    }

    void finish_stream() {
        // Tag the eof word so drain_one() knows when the packet is complete.
        pending_.back().last = true;
        pending_.back().payload_bits = payload_bits_;
        if (record_timing_ && !timings_.empty()) {
            timings_.back().eof_edge = edge_;
            timings_.back().words = words_in_;
        }
        fsm_ = RxFsm::Idle;
    }

    // A sof cut the open packet short. Unrouted words are dropped; words
    // already heading for a FIFO stay there and the reader flags the span.
    void abandon() {
        if (fsm_ == RxFsm::CaptureHdr) {
            while (!pending_.empty() && pending_.back().packet == packet_) pending_.pop_back();
            ++stats_.discarded;
        } else if (fsm_ == RxFsm::Stream) {
            if (!pending_.empty() && pending_.back().packet == packet_) {
                pending_.back().last = true;
                pending_.back().payload_bits = 0;
            } else {
                ++stats_.delivered[*dest_];
            }
        } else if (fsm_ == RxFsm::Discard) {
            ++stats_.discarded;
        }
        fsm_ = RxFsm::Idle;
    }

    bool space_for_packet(const PacketFifo& f) const {
        const std::size_t depth = f.config().depth_write_words;
        const std::size_t used = std::min(depth, f.counts().wr_data_count);
        if (discipline_ == RxDiscipline::SpaceCount) return depth - used >= pending_.front().packet_words;
        return !f.flags().prog_full;
    }

    void drain_one() {
        if (pending_.empty() || !pending_.front().dest) return;
        Pending& p = pending_.front();
        PacketFifo& f = *fifos_[*p.dest];
        if (p.first && !space_for_packet(f)) return;
        if (!f.write(p.word).accepted) {
            ++stats_.rejected_writes;
            return;
        }
        if (p.first && record_timing_ && !timings_.empty()) timings_.back().first_write_edge = edge_;
        if (p.last) {
            ++stats_.delivered[*p.dest];
            stats_.payload_bits += p.payload_bits;
        }
        pending_.pop_front();
    }

    StreamChannel& in_;
    std::vector<PacketFifo*> fifos_;
    RouteTable table_;
    RxDiscipline discipline_;

    RxFsm fsm_ = RxFsm::Idle;
    std::vector<std::uint32_t> hdr_;
    std::deque<Pending> pending_;
    std::optional<std::size_t> dest_;
    std::uint64_t packet_ = 0;
    std::uint32_t payload_bits_ = 0;
    std::size_t words_in_ = 0;
    bool eof_seen_ = false;

    RxStats stats_;
    bool record_timing_ = false;
    std::vector<RxTiming> timings_;
    std::uint64_t edge_ = 0;
};

}  // namespace pwrap
