#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pwrap/error.hpp"
#include "pwrap/framing.hpp"

namespace pwrap {

struct FifoConfig {
    unsigned write_width_bits = 64;
    unsigned read_width_bits = 64;
    std::size_t depth_write_words = 512;
    bool fwft = true;
    std::size_t prog_full_threshold = 512;  // write words
    std::size_t prog_empty_threshold = 0;   // read words
    unsigned count_sync_latency = 2;

    std::size_t write_lanes() const { return write_width_bits / 32; }
    std::size_t read_lanes() const { return read_width_bits / 32; }
    /// Capacity expressed in read-side words.
    std::size_t depth_read_words() const { return depth_write_words * write_lanes() / read_lanes(); }

    bool operator==(const FifoConfig&) const = default;
};

inline void validate(const FifoConfig& c) {
    auto width_ok = [](unsigned w) { return w == 32 || w == 64 || w == 128; };
    if (!width_ok(c.write_width_bits)) throw ConfigError("write width must be 32, 64 or 128");
    if (!width_ok(c.read_width_bits)) throw ConfigError("read width must be 32, 64 or 128");
    const std::size_t d = c.depth_write_words;
    if (d < 16 || (d & (d - 1)) != 0) throw ConfigError("depth must be a power of two >= 16");
    if (c.prog_full_threshold > d) throw ConfigError("prog_full_threshold exceeds depth");
    if (c.prog_empty_threshold >= c.depth_read_words()) throw ConfigError("prog_empty_threshold must be below depth");
    if (c.count_sync_latency > 64) throw ConfigError("count_sync_latency above 64 cycles");
}

struct FifoCounts {
    std::size_t wr_data_count = 0;  // write words, as seen by the writer
    std::size_t rd_data_count = 0;  // read words, as seen by the reader
    bool operator==(const FifoCounts&) const = default;
};

struct FifoFlags {
    bool full = false;
    bool empty = true;
    bool prog_full = false;
    bool prog_empty = true;
    bool operator==(const FifoFlags&) const = default;
};

struct WriteOutcome {
    bool accepted = false;
};

struct ReadOutcome {
    std::optional<Beat> word;
    bool valid = false;
};

/// Fixed-length synchronizer chain carrying a monotonically increasing
/// pointer across clock domains. The observed value trails the source by
/// `latency` observer-domain edges after the edge that sampled it.
class PointerSync {
public:
    explicit PointerSync(unsigned latency = 2) : stages_(latency + 1, 0) {}

    void clock(std::uint64_t source) {
        stages_[head_] = source;
        head_ = (head_ + 1) % stages_.size();
    }
    std::uint64_t value() const { return stages_[head_]; }
    void reset(std::uint64_t v) { std::fill(stages_.begin(), stages_.end(), v); }

private:
    std::vector<std::uint64_t> stages_;
    std::size_t head_ = 0;
};

/// Dual-clock packet FIFO with optional width conversion.
///
/// Storage is counted in write-side words (slots). Each slot holds
/// `write_lanes` DW lanes; lanes past an eof are padding and never surface on
/// the read port. Read words are formed per packet: up to `read_lanes` lanes,
/// closed early by eof or by the next sof.
///
/// Each port sees its own pointer exactly and the opposite pointer through a
/// PointerSync, so wr_data_count can only over-report and rd_data_count can
/// only under-report. The owner must call tick_write_domain() and
/// tick_read_domain() once per edge of the respective clock, after that edge's
/// port operations.
class PacketFifo {
public:
    explicit PacketFifo(FifoConfig cfg, std::string name = "fifo")
        : cfg_(cfg), name_(std::move(name)), wr_sync_(cfg.count_sync_latency), rd_sync_(cfg.count_sync_latency) {
        validate(cfg_);
        wl_ = cfg_.write_lanes();
        rl_ = cfg_.read_lanes();
    }

    const FifoConfig& config() const { return cfg_; }
    const std::string& name() const { return name_; }

    // ---- write port ---------------------------------------------------------

    WriteOutcome write(const Beat& b) {
        if (b.lanes != wl_) throw std::invalid_argument(name_ + ": beat width differs from write port");
        if (b.valid_dw == 0 || b.valid_dw > b.lanes || (!b.eof && b.valid_dw != b.lanes))
            throw std::invalid_argument(name_ + ": padding lanes only allowed on eof beats");
        if (wr_view_count() >= cfg_.depth_write_words) return {false};
        for (std::size_t k = 0; k < wl_; ++k) {
            Lane l;
            l.dw = b.dw[k];
            l.pad = k >= b.valid_dw;
            l.sof = b.sof && k == 0;
            l.eof = b.eof && k + 1 == b.valid_dw;
            lanes_.push_back(l);
            if (!l.pad) form(l);
        }
        ++slots_written_;
        return {true};
    }

    WriteOutcome write(const FramedWord& w) { return write(to_beat(w)); }

    // ---- read port ----------------------------------------------------------

    /// FWFT: consumes and returns the exposed head word.
    /// Standard: returns the word latched by the previous strobe, then latches
    /// the head if `strobe` is set and data is visible.
    ReadOutcome read(bool strobe = true) {
        if (cfg_.fwft) {
            if (!strobe || rd_view_count() == 0) return {};
            Beat b = pop_beat();
            return {b, true};
        }
        ReadOutcome out;
        if (out_reg_) {
            out.word = out_reg_;
            out.valid = true;
            out_reg_.reset();
        }
        if (strobe && rd_view_count() > 0) out_reg_ = pop_beat();
        return out;
    }

    /// Head word as exposed by first-word fall-through; nullopt when the FIFO
    /// is not FWFT or appears empty to the reader.
    std::optional<Beat> peek() const {
        if (!cfg_.fwft || rd_view_count() == 0) return std::nullopt;
        return form_head_beat().first;
    }

    // ---- status -------------------------------------------------------------

    FifoCounts counts() const { return {wr_view_count(), rd_view_count()}; }

    FifoFlags flags() const {
        FifoFlags f;
        const auto c = counts();
        f.full = c.wr_data_count >= cfg_.depth_write_words;
        f.empty = c.rd_data_count == 0;
        f.prog_full = c.wr_data_count >= cfg_.prog_full_threshold;
        f.prog_empty = c.rd_data_count <= cfg_.prog_empty_threshold;
        return f;
    }

    /// Whether the reader can already see a word carrying an eof marker,
    /// i.e. at least one whole packet (by markers) is readable.
    bool packet_visible() const {
        const std::uint64_t seen = std::min<std::uint64_t>(rd_sync_.value(), beats_formed_);
        return !eof_beats_.empty() && eof_beats_.front() < seen;
    }

    /// Standard-mode output register holds a word not yet returned by read().
    bool output_latched() const { return out_reg_.has_value(); }

    /// True occupancy in write words (slots not yet fully drained).
    std::size_t occupancy() const { return static_cast<std::size_t>(slots_written_ - slots_freed()); }
    /// Read words that could be delivered right now, ignoring sync lag.
    std::size_t ready_read_words() const { return static_cast<std::size_t>(beats_formed_ - beats_read_); }
    /// Packets whose sof lane is still stored.
    std::size_t stored_sof_count() const {
        return static_cast<std::size_t>(std::count_if(lanes_.begin(), lanes_.end(), [](const Lane& l) { return l.sof && !l.pad; }));
    }

    // ---- clocking -------------------------------------------------------------

    void tick_write_domain() { wr_sync_.clock(slots_freed()); }
    void tick_read_domain() { rd_sync_.clock(beats_formed_); }

    // ---- fault injection ------------------------------------------------------

    /// Contents of the slot `slot_index` positions behind the oldest stored
    /// slot (already-read lanes of a partially drained slot read back as pads).
    Beat inspect_slot(std::size_t slot_index) const {
        check_slot(slot_index);
        Beat b;
        b.lanes = static_cast<std::uint8_t>(wl_);
        b.valid_dw = 0;
        for (std::size_t k = 0; k < wl_; ++k) {
            const auto idx = lane_index(slot_index, k);
            if (!idx) continue;
            const Lane& l = lanes_[*idx];
            b.dw[k] = l.dw;
            if (!l.pad) b.valid_dw = static_cast<std::uint8_t>(k + 1);
            if (l.sof) b.sof = true;
            if (l.eof) b.eof = true;
        }
        return b;
    }

    /// XORs `xor_mask` into the stored data of one slot (lane 0 takes the low
    /// 32 bits, lane 1 the high 32 bits). `marker_mask` bit 0 toggles the
    /// slot's sof marker and bit 1 its eof marker.
    void inject_fault(std::size_t slot_index, std::uint64_t xor_mask, std::uint8_t marker_mask = 0) {
        check_slot(slot_index);
        for (std::size_t k = 0; k < wl_ && k < 2; ++k) {
            if (auto idx = lane_index(slot_index, k)) lanes_[*idx].dw ^= static_cast<std::uint32_t>(xor_mask >> (32 * k));
        }
        if (marker_mask == 0) return;
        if (marker_mask & 0x1) {
            if (auto idx = lane_index(slot_index, 0)) lanes_[*idx].sof = !lanes_[*idx].sof;
        }
        if (marker_mask & 0x2) {
            std::optional<std::size_t> last;
            for (std::size_t k = 0; k < wl_; ++k) {
                auto idx = lane_index(slot_index, k);
                if (idx && !lanes_[*idx].pad) last = idx;
            }
            if (last) lanes_[*last].eof = !lanes_[*last].eof;
        }
        reform();
    }

private:
    struct Lane {
        std::uint32_t dw = 0;
        bool sof = false;
        bool eof = false;
        bool pad = false;
    };

    std::uint64_t slots_freed() const { return lanes_consumed_ / wl_; }

    std::size_t wr_view_count() const { return static_cast<std::size_t>(slots_written_ - wr_sync_.value()); }
    std::size_t rd_view_count() const {
        const std::uint64_t seen = std::min<std::uint64_t>(rd_sync_.value(), beats_formed_);
        return seen > beats_read_ ? static_cast<std::size_t>(seen - beats_read_) : 0;
    }

    void form(const Lane& l) {
        if (l.sof && tail_chunk_ > 0) {
            ++beats_formed_;
            tail_chunk_ = 0;
        }
        ++tail_chunk_;
        if (l.eof) eof_beats_.push_back(beats_formed_);
        if (l.eof || tail_chunk_ == rl_) {
            ++beats_formed_;
            tail_chunk_ = 0;
        }
    }

    void reform() {
        beats_formed_ = beats_read_;
        tail_chunk_ = 0;
        eof_beats_.clear();
        for (const Lane& l : lanes_)
            if (!l.pad) form(l);
    }

    // Returns the head beat and how many stored lanes (padding included) it spans.
    std::pair<Beat, std::size_t> form_head_beat() const {
        Beat b;
        b.lanes = static_cast<std::uint8_t>(rl_);
        b.valid_dw = 0;
        std::size_t i = 0;
        while (i < lanes_.size() && lanes_[i].pad) ++i;
        while (i < lanes_.size()) {
            const Lane& l = lanes_[i];
            if (l.pad) {
                ++i;
                continue;
            }
            if (b.valid_dw > 0 && l.sof) break;
            if (b.valid_dw == 0 && l.sof) b.sof = true;
            b.dw[b.valid_dw++] = l.dw;
            ++i;
            if (l.eof) {
                b.eof = true;
                break;
            }
            if (b.valid_dw == rl_) break;
        }
        while (i < lanes_.size() && lanes_[i].pad) ++i;
        return {b, i};
    }

    Beat pop_beat() {
        auto [b, span] = form_head_beat();
        if (b.valid_dw == 0) throw InvariantViolation(name_ + ": read port formed an empty word");
        lanes_.erase(lanes_.begin(), lanes_.begin() + static_cast<std::ptrdiff_t>(span));
        lanes_consumed_ += span;
        if (!eof_beats_.empty() && eof_beats_.front() == beats_read_) eof_beats_.pop_front();
        ++beats_read_;
        return b;
    }

    void check_slot(std::size_t slot_index) const {
        if (slot_index >= occupancy())
            throw IndexOutOfRange(name_ + ": slot " + std::to_string(slot_index) + " beyond occupancy " +
                                  std::to_string(occupancy()));
    }

    std::optional<std::size_t> lane_index(std::size_t slot, std::size_t lane) const {
        const std::size_t head_offset = static_cast<std::size_t>(lanes_consumed_ % wl_);
        const std::size_t abs = slot * wl_ + lane;
        if (abs < head_offset) return std::nullopt;
        const std::size_t idx = abs - head_offset;
        if (idx >= lanes_.size()) return std::nullopt;
        return idx;
    }

    FifoConfig cfg_;
    std::string name_;
    std::size_t wl_ = 2;
    std::size_t rl_ = 2;

    std::deque<Lane> lanes_;
    std::uint64_t slots_written_ = 0;
    std::uint64_t lanes_consumed_ = 0;
    std::uint64_t beats_formed_ = 0;
    std::uint64_t beats_read_ = 0;
    std::size_t tail_chunk_ = 0;
    std::deque<std::uint64_t> eof_beats_;  // indices of formed words that close a packet

    PointerSync wr_sync_;  // read-side progress as seen by the writer
    PointerSync rd_sync_;  // write-side progress as seen by the reader
    std::optional<Beat> out_reg_;
};

}  // namespace pwrap
