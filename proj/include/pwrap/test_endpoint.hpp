#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pwrap/flow_control.hpp"
#include "pwrap/packet_fifo.hpp"
#include "pwrap/sim_kernel.hpp"
#include "pwrap/tlp.hpp"

namespace pwrap {

struct BoardState {
    std::uint8_t leds = 0;
    std::uint8_t switches = 0;
    std::uint16_t completer_id = 0x0100;
    bool operator==(const BoardState&) const = default;
};

enum class FramingMode { Framed, LengthPrefixed };

inline constexpr std::string_view to_string(FramingMode m) {
    return m == FramingMode::Framed ? "framed" : "length_prefixed";
}

/// Completion for a read: one DW carrying the switch value, whatever length
/// was asked for.
inline Tlp make_completion(const Tlp& read, const BoardState& b) {
    Tlp c;
    c.kind = TlpKind::CplD;
    c.length_dw = 1;
    c.first_be = 0;
    c.completer_id = b.completer_id;
    c.cpl_status = 0;
    c.byte_count = 4;
    c.requester_id = read.requester_id;
    c.tag = read.tag;
    c.lower_address = static_cast<std::uint8_t>(read.address & 0x7F);
    c.payload = {b.switches};
    c.digest = read.digest;
    return c;
}

/// Applies one request to the board: writes drive the LEDs, reads produce a
/// completion. Other kinds yield nothing.
inline std::optional<Tlp> respond(const Tlp& t, BoardState& b) {
    if (is_write(t.kind)) {
        b.leds = static_cast<std::uint8_t>(t.payload.empty() ? 0 : t.payload[0] & 0xFF);
        return std::nullopt;
    }
    if (is_read(t.kind)) return make_completion(t, b);
    return std::nullopt;
}

/// Splits a bare DW stream into packets by the length in each header. There
/// is no way back once a header is unrecognizable: every later DW is lost.
class LengthPrefixedParser {
public:
    enum class State { Header, Body, Lost };

    template <class Sink>
    void push(std::uint32_t dw, Sink&& sink) {
        if (state_ == State::Lost) {
            ++lost_dws_;
            return;
        }
        if (state_ == State::Header) {
            const auto n = packet_dw_from_header(dw);
            const std::uint32_t type = tlp_detail::type_of(dw);
            if (!n || (type != tlp_detail::kTypeMem && type != tlp_detail::kTypeCpl)) {
                state_ = State::Lost;
                ++lost_dws_;
                return;
            }
            need_ = *n;
            current_.clear();
            state_ = State::Body;
        }
        current_.push_back(dw);
        if (current_.size() == need_) {
            state_ = State::Header;
            const bool bad = !verify_digest(current_);
            if (bad) ++corrupted_;
            sink(AssembledPacket{std::move(current_), bad});
            current_.clear();
        }
    }

    State state() const { return state_; }
    bool mid_packet() const { return state_ == State::Body; }
    std::uint64_t lost_dws() const { return lost_dws_; }
    std::uint64_t corrupted() const { return corrupted_; }

private:
    State state_ = State::Header;
    std::size_t need_ = 0;
    std::vector<std::uint32_t> current_;
    std::uint64_t lost_dws_ = 0;
    std::uint64_t corrupted_ = 0;
};

struct EndpointStats {
    std::uint64_t delivered = 0;    // intact packets taken from the RX FIFO
    std::uint64_t corrupted = 0;    // flagged by the deframer, digest or decoder
    std::uint64_t writes = 0;
    std::uint64_t reads = 0;
    std::uint64_t completions = 0;  // written to the TX FIFO
    std::uint64_t unsupported = 0;
    std::uint64_t long_reads = 0;   // reads asking for more than 1 DW
    std::uint64_t payload_bits = 0; // write payload delivered
    std::vector<std::uint8_t> led_history;
};

/// The completer: consumes requests from one RX FIFO and writes completions
/// into one TX FIFO.
///
/// Framed mode reads whole packets only (CountGate) and relies on sof/eof to
/// find packet boundaries. Length-prefixed mode reads every visible word and
/// parses by header length alone.
class TestEndpoint : public Component {
public:
    TestEndpoint(PacketFifo& rx, PacketFifo& tx, BoardState board, FramingMode mode = FramingMode::Framed)
        : rx_(rx),
          tx_(tx),
          board_(board),
          mode_(mode),
          consumer_(rx, mode == FramingMode::Framed ? ConsumerStrategy::CountGate : ConsumerStrategy::Valid,
                    rx.config().depth_read_words(), [this](AssembledPacket&& p) { handle(std::move(p)); }),
          producer_(tx, ProducerStrategy::SpaceCount, words_for(5, tx.config().write_lanes())) {}

    void record_packets(bool on) { record_ = on; }

    void evaluate(TimePs) override {
        if (mode_ == FramingMode::Framed) {
            consumer_.step();
        } else {
            const auto r = rx_.read();
            if (r.valid)
                for (std::size_t k = 0; k < r.word->valid_dw; ++k)
                    parser_.push(r.word->dw[k], [this](AssembledPacket&& p) { handle(std::move(p)); });
        }
        producer_.step();
    }

    const BoardState& board() const { return board_; }
    void set_switches(std::uint8_t v) { board_.switches = v; }
    const EndpointStats& stats() const { return stats_; }
    const std::vector<std::vector<std::uint32_t>>& received() const { return received_; }
    FramingMode mode() const { return mode_; }
    const LengthPrefixedParser& parser() const { return parser_; }
    const DeframeDiagnostics& diagnostics() const { return consumer_.diagnostics(); }
    bool idle() const {
        return producer_.idle() && !producer_.mid_packet() &&
               (mode_ == FramingMode::Framed ? !consumer_.mid_packet() : !parser_.mid_packet());
    }

private:
    void handle(AssembledPacket&& p) {
        if (p.corrupted) {
            ++stats_.corrupted;
            return;
        }
        std::optional<Tlp> t;
        try {
            t = decode_tlp(p.dws);
        } catch (const Error&) {
            ++stats_.corrupted;
            return;
        }
        ++stats_.delivered;
        if (record_) received_.push_back(p.dws);
        if (is_write(t->kind)) {
            ++stats_.writes;
            stats_.payload_bits += std::uint64_t{t->length_dw} * 32;
            respond(*t, board_);
            stats_.led_history.push_back(board_.leds);
        } else if (is_read(t->kind)) {
            ++stats_.reads;
            if (t->length_dw > 1) ++stats_.long_reads;
            const Tlp c = *respond(*t, board_);
            producer_.enqueue(encode_tlp(c));
            ++stats_.completions;
        } else {
            ++stats_.unsupported;
        }
    }

    PacketFifo& rx_;
    PacketFifo& tx_;
    BoardState board_;
    FramingMode mode_;
    PacketConsumer consumer_;
    PacketProducer producer_;
    LengthPrefixedParser parser_;
    EndpointStats stats_;
    bool record_ = false;
    std::vector<std::vector<std::uint32_t>> received_;
};

/// Reader for RX FIFOs nobody else consumes: takes whole packets and counts them.
class PacketDrain : public Component {
public:
    explicit PacketDrain(PacketFifo& f)
        : consumer_(f, f.config().fwft ? ConsumerStrategy::CountGate : ConsumerStrategy::Valid,
                    f.config().depth_read_words(), [this](AssembledPacket&& p) {
                        if (p.corrupted) {
                            ++corrupted_;
                            return;
                        }
                        ++delivered_;
                        if (!p.dws.empty() && is_write(decode_header_kind(p.dws)))
                            payload_bits_ += std::uint64_t{tlp_detail::length_of(p.dws[0])} * 32;
                    }) {}

    void evaluate(TimePs) override { consumer_.step(); }

    std::uint64_t delivered() const { return delivered_; }
    std::uint64_t corrupted() const { return corrupted_; }
    std::uint64_t payload_bits() const { return payload_bits_; }
    bool idle() const { return !consumer_.mid_packet(); }

private:
    static TlpKind decode_header_kind(const std::vector<std::uint32_t>& dws) {
        try {
            return decode_header(dws).kind;
        } catch (const Error&) {
            return TlpKind::Raw;
        }
    }

    PacketConsumer consumer_;
    std::uint64_t delivered_ = 0;
    std::uint64_t corrupted_ = 0;
    std::uint64_t payload_bits_ = 0;
};

}  // namespace pwrap
