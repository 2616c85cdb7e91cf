#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pwrap/error.hpp"
#include "pwrap/flow_control.hpp"
#include "pwrap/framing.hpp"
#include "pwrap/stream.hpp"
#include "pwrap/tlp.hpp"

namespace pwrap {

struct LinkParams {
    unsigned lanes = 1;
    double raw_gbps_per_lane = 2.5;
    double encoding_factor = 0.8;
    unsigned per_tlp_framing_bytes = 20;  // start, sequence, 3-DW header, LCRC, end
    double dllp_overhead_fraction = 0.02;
    bool operator==(const LinkParams&) const = default;
};

inline void validate(const LinkParams& p) {
    if (p.lanes == 0) throw ConfigError("link lanes must be positive");
    if (!(p.raw_gbps_per_lane > 0)) throw ConfigError("link raw rate must be positive");
    if (!(p.encoding_factor > 0 && p.encoding_factor <= 1)) throw ConfigError("encoding factor must be in (0, 1]");
    if (!(p.dllp_overhead_fraction >= 0 && p.dllp_overhead_fraction < 1))
        throw ConfigError("dllp overhead fraction must be in [0, 1)");
}

/// Usable bit rate after line encoding, in Gbps.
inline double usable_gbps(const LinkParams& p) { return p.lanes * p.raw_gbps_per_lane * p.encoding_factor; }

/// Period of the 64-bit link-side interface clock, rounded to whole ps.
inline std::int64_t link_period_ps(const LinkParams& p) {
    return static_cast<std::int64_t>(std::llround(64.0 * 1000.0 / usable_gbps(p)));
}

/// Analytic goodput for back-to-back 3-DW-header writes of `payload_bytes`.
inline double effective_throughput(const LinkParams& p, std::size_t payload_bytes) {
    if (payload_bytes == 0) throw ConfigError("payload must be positive");
    const double b = static_cast<double>(payload_bytes);
    return usable_gbps(p) * b / (b + p.per_tlp_framing_bytes) * (1.0 - p.dllp_overhead_fraction);
}

/// Measured goodput from delivered payload bits over simulated time.
inline double effective_throughput(std::uint64_t payload_bits, std::int64_t simulated_ps) {
    if (simulated_ps <= 0) return 0.0;
    return static_cast<double>(payload_bits) / static_cast<double>(simulated_ps) * 1000.0;
}

/// Bytes a TLP occupies on the wire: payload plus fixed framing, 4 more for a
/// 4-DW header and 4 more for a digest.
inline std::size_t wire_bytes(const LinkParams& p, std::uint32_t dw0) {
    std::size_t n = p.per_tlp_framing_bytes;
    if ((dw0 >> 29) & 0x1u) n += 4;
    if ((dw0 >> 29) & 0x2u) n += 4 * tlp_detail::length_of(dw0);
    if ((dw0 >> 15) & 0x1u) n += 4;
    return n;
}

enum class TrafficKind { WriteStream, ReadStream, Mixed, Idle };

inline constexpr std::string_view to_string(TrafficKind k) {
    switch (k) {
        case TrafficKind::WriteStream: return "write_stream";
        case TrafficKind::ReadStream: return "read_stream";
        case TrafficKind::Mixed: return "mixed";
        case TrafficKind::Idle: return "idle";
    }
    return "?";
}

struct TrafficProfile {
    TrafficKind kind = TrafficKind::WriteStream;
    std::size_t payload_bytes = 256;
    std::uint64_t count = 0;  // 0 = unlimited
    unsigned gap_min = 0;     // idle link edges after each TLP, uniform in [gap_min, gap_max]
    unsigned gap_max = 0;
    double throttle = 0.0;    // probability the host deasserts ready on an edge
    std::uint64_t base_address = 0xFD000000;
    std::uint64_t window_bytes = 0x1000;
    std::string mix = "WR";  // Mixed: W = write, R = read, cycled
    std::vector<std::uint32_t> write_values;  // first payload DW of successive writes
    bool digest = false;
    std::uint16_t requester_id = 0x0000;
    std::uint16_t read_length_dw = 1;
    bool operator==(const TrafficProfile&) const = default;
};

inline void validate(const TrafficProfile& t) {
    if (t.payload_bytes == 0 || t.payload_bytes % 4 != 0 || t.payload_bytes > 4096)
        throw ConfigError("payload_bytes must be a positive multiple of 4 up to 4096");
    if (t.gap_min > t.gap_max) throw ConfigError("gap_min above gap_max");
    if (!(t.throttle >= 0 && t.throttle < 1)) throw ConfigError("throttle must be in [0, 1)");
    if (t.base_address % 4 != 0) throw ConfigError("base_address must be DW aligned");
    if (t.window_bytes < t.payload_bytes) throw ConfigError("window smaller than one payload");
    if (t.kind == TrafficKind::Mixed) {
        if (t.mix.empty()) throw ConfigError("mixed traffic needs a mix pattern");
        for (char c : t.mix)
            if (c != 'W' && c != 'R') throw ConfigError("mix pattern may only contain W and R");
    }
    if (t.read_length_dw == 0 || t.read_length_dw > 1024) throw ConfigError("read_length_dw must be 1..1024");
}

struct ReadRequest {
    std::uint8_t tag = 0;
    std::uint64_t address = 0;
    std::uint16_t length_dw = 1;
    std::uint16_t requester_id = 0;
    bool operator==(const ReadRequest&) const = default;
};

/// Outstanding non-posted requests by tag.
class TagTracker {
public:
    static constexpr std::size_t kCapacity = 32;

    bool full() const { return outstanding_ == kCapacity; }
    std::size_t outstanding() const { return outstanding_; }
    bool is_outstanding(std::uint8_t tag) const { return tag < kCapacity && slots_[tag].has_value(); }

    /// Lowest free tag, or nullopt when all are in use.
    std::optional<std::uint8_t> issue(ReadRequest r) {
        for (std::size_t t = 0; t < kCapacity; ++t) {
            if (!slots_[t]) {
                r.tag = static_cast<std::uint8_t>(t);
                slots_[t] = r;
                ++outstanding_;
                ++issued_;
                return r.tag;
            }
        }
        return std::nullopt;
    }

    ReadRequest match_completion(const Tlp& cpl) {
        if (!is_completion(cpl.kind)) throw UnknownTag("not a completion");
        if (!is_outstanding(cpl.tag)) throw UnknownTag("completion for tag " + std::to_string(cpl.tag) + " not issued");
        ReadRequest r = *slots_[cpl.tag];
        slots_[cpl.tag].reset();
        --outstanding_;
        ++matched_;
        return r;
    }

    std::uint64_t issued() const { return issued_; }
    std::uint64_t matched() const { return matched_; }

private:
    std::array<std::optional<ReadRequest>, kCapacity> slots_{};
    std::size_t outstanding_ = 0;
    std::uint64_t issued_ = 0;
    std::uint64_t matched_ = 0;
};

/// Host-side request source standing in for the driver applications.
class TrafficGenerator {
public:
    TrafficGenerator(TrafficProfile p, std::uint64_t seed) : p_(std::move(p)), rng_(seed) { validate(p_); }

    const TrafficProfile& profile() const { return p_; }
    bool exhausted() const { return p_.kind == TrafficKind::Idle || (p_.count != 0 && emitted_ >= p_.count); }
    std::uint64_t emitted() const { return emitted_; }

    /// Next TLP, or nullopt when the count is exhausted or a read would need
    /// a tag while all 32 are outstanding.
    std::optional<Tlp> step(TagTracker& tags) {
        if (exhausted()) return std::nullopt;
        bool write = true;
        if (p_.kind == TrafficKind::ReadStream) write = false;
        if (p_.kind == TrafficKind::Mixed) write = p_.mix[emitted_ % p_.mix.size()] == 'W';
        Tlp t;
        if (write) {
            t.length_dw = static_cast<std::uint16_t>(p_.payload_bytes / 4);
            t.address = p_.base_address + (writes_ * p_.payload_bytes) % p_.window_bytes;
            t.kind = t.address >> 32 ? TlpKind::MemWrite64 : TlpKind::MemWrite32;
            t.requester_id = p_.requester_id;
            t.first_be = 0xF;
            t.last_be = t.length_dw > 1 ? 0xF : 0;
            t.payload.resize(t.length_dw);
            for (auto& d : t.payload) d = static_cast<std::uint32_t>(rng_());
            if (!p_.write_values.empty()) t.payload[0] = p_.write_values[writes_ % p_.write_values.size()];
            ++writes_;
        } else {
            if (tags.full()) return std::nullopt;
            t.length_dw = p_.read_length_dw;
            t.address = p_.base_address + (reads_ * 4u * p_.read_length_dw) % p_.window_bytes;
            t.kind = t.address >> 32 ? TlpKind::MemRead64 : TlpKind::MemRead32;
            t.requester_id = p_.requester_id;
            t.first_be = 0xF;
            t.last_be = t.length_dw > 1 ? 0xF : 0;
            t.tag = *tags.issue({0, t.address, t.length_dw, t.requester_id});
            ++reads_;
        }
        t.digest = p_.digest;
        ++emitted_;
        return t;
    }

private:
    TrafficProfile p_;
    std::mt19937_64 rng_;
    std::uint64_t emitted_ = 0;
    std::uint64_t writes_ = 0;
    std::uint64_t reads_ = 0;
};

/// Drives generated TLPs into the RX handler over a StreamChannel, paced so
/// the link never carries more than its usable rate. Each TLP adds its wire
/// bytes to a debt that drains by 8 x (1 - dllp) bytes per interface edge; a
/// new TLP may start once the debt is paid off.
class LinkSource : public Component {
public:
    LinkSource(StreamChannel& out, TrafficGenerator& gen, TagTracker& tags, const LinkParams& params,
               std::uint64_t seed)
        : out_(out), gen_(gen), tags_(tags), params_(params), rng_(seed) {
        validate(params_);
        bytes_per_edge_ = 8.0 * (1.0 - params_.dllp_overhead_fraction);
    }

    void record_packets(bool on) { record_ = on; }

    void evaluate(TimePs) override {
        ++edge_;
        debt_ = std::max(debt_ - bytes_per_edge_, -bytes_per_edge_);
        const auto& cur = out_.data.get();
        const bool moved = out_.transfer();
        if (cur && !moved) {
            out_.data.set(cur);
            ++backpressure_edges_;
            return;
        }
        if (moved && cur->eof) ++packets_sent_;
        if (words_.empty()) {
            if (gap_left_ > 0) {
                --gap_left_;
                out_.data.set(std::nullopt);
                return;
            }
            if (debt_ > 0) {
                out_.data.set(std::nullopt);
                return;
            }
            auto t = gen_.step(tags_);
            if (!t) {
                out_.data.set(std::nullopt);
                return;
            }
            const auto dws = encode_tlp(*t);
            if (record_) offered_.push_back(dws);
            if (is_write(t->kind)) offered_payload_bits_ += std::uint64_t{t->length_dw} * 32;
            ++offered_count_;
            debt_ += static_cast<double>(wire_bytes(params_, dws[0]));
            for (const auto& w : frame(dws)) words_.push_back(w);
            const auto& p = gen_.profile();
            gap_left_ = p.gap_min + (p.gap_max > p.gap_min ? static_cast<unsigned>(rng_() % (p.gap_max - p.gap_min + 1)) : 0);
        }
        out_.data.set(words_.front());
        words_.pop_front();
    }

    void commit(TimePs) override { out_.data.commit(); }

    /// Nothing left to send and nothing on the wire.
    bool drained() const { return gen_.exhausted() && words_.empty() && !out_.data.get(); }

    std::uint64_t offered() const { return offered_count_; }
    std::uint64_t packets_sent() const { return packets_sent_; }
    std::uint64_t backpressure_edges() const { return backpressure_edges_; }
    std::uint64_t offered_payload_bits() const { return offered_payload_bits_; }
    const std::vector<std::vector<std::uint32_t>>& offered_packets() const { return offered_; }

private:
    StreamChannel& out_;
    TrafficGenerator& gen_;
    TagTracker& tags_;
    LinkParams params_;
    std::mt19937_64 rng_;
    double bytes_per_edge_ = 8.0;
    double debt_ = 0.0;
    unsigned gap_left_ = 0;
    std::deque<FramedWord> words_;

    bool record_ = false;
    std::vector<std::vector<std::uint32_t>> offered_;
    std::uint64_t offered_count_ = 0;
    std::uint64_t offered_payload_bits_ = 0;
    std::uint64_t packets_sent_ = 0;
    std::uint64_t backpressure_edges_ = 0;
    std::uint64_t edge_ = 0;
};

/// Host-side receiver for upstream (TX) traffic. Deasserts ready with the
/// profile's throttle probability and reassembles packets by markers.
class LinkSink : public Component {
public:
    using Sink = std::function<void(AssembledPacket&&)>;

    struct Transfer {
        std::uint64_t edge;
        FramedWord word;
    };

    LinkSink(StreamChannel& in, double stall_probability, std::uint64_t seed, Sink sink)
        : in_(in), p_(stall_probability), rng_(seed), sink_(std::move(sink)) {}

    void record_transfers(bool on) { record_ = on; }

    void evaluate(TimePs) override {
        ++edge_;
        if (in_.transfer()) {
            const FramedWord w = *in_.data.get();
            ++words_;
            if (record_) log_.push_back({edge_, w});
            assembler_.push(to_beat(w), [&](AssembledPacket&& p) { sink_(std::move(p)); });
        } else if (in_.data.get()) {
            ++stall_edges_;
        }
        in_.ready.set(!bernoulli(rng_, p_));
    }

    void commit(TimePs) override { in_.ready.commit(); }

    const std::vector<Transfer>& transfers() const { return log_; }
    const DeframeDiagnostics& diagnostics() const { return assembler_.diagnostics(); }
    bool mid_packet() const { return assembler_.open(); }
    std::uint64_t words() const { return words_; }
    std::uint64_t stall_edges() const { return stall_edges_; }

private:
    StreamChannel& in_;
    double p_;
    std::mt19937_64 rng_;
    Sink sink_;
    PacketAssembler assembler_;
    bool record_ = false;
    std::vector<Transfer> log_;
    std::uint64_t words_ = 0;
    std::uint64_t stall_edges_ = 0;
    std::uint64_t edge_ = 0;
};

}  // namespace pwrap
