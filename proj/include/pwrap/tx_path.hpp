#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pwrap/error.hpp"
#include "pwrap/flow_control.hpp"
#include "pwrap/packet_fifo.hpp"
#include "pwrap/stream.hpp"

namespace pwrap {

enum class SchedulerPolicy { StrictPriority, RoundRobin };

inline constexpr std::string_view to_string(SchedulerPolicy p) {
    return p == SchedulerPolicy::StrictPriority ? "strict" : "round_robin";
}

struct SchedulerConfig {
    SchedulerPolicy policy = SchedulerPolicy::StrictPriority;
    std::vector<std::size_t> priority;  // position 0 = highest; empty means index order
    bool operator==(const SchedulerConfig&) const = default;
};

/// Fills in the identity order when `priority` is empty and checks that it is
/// a permutation of 0..n-1.
inline SchedulerConfig normalized(SchedulerConfig c, std::size_t n) {
    if (c.priority.empty()) {
        for (std::size_t i = 0; i < n; ++i) c.priority.push_back(i);
    }
    if (c.priority.size() != n) throw ConfigError("scheduler priority must list every TX FIFO exactly once");
    std::vector<bool> seen(n, false);
    for (auto i : c.priority) {
        if (i >= n || seen[i]) throw ConfigError("scheduler priority is not a permutation");
        seen[i] = true;
    }
    return c;
}

/// Judging decision for one edge. `last` is the previous grantee (RoundRobin
/// resumes just after it, wrapping).
inline std::optional<std::size_t> judge(const std::vector<bool>& eligible, const SchedulerConfig& c,
                                        std::optional<std::size_t> last) {
    const std::size_t n = eligible.size();
    if (c.policy == SchedulerPolicy::StrictPriority) {
        for (auto i : c.priority)
            if (eligible[i]) return i;
        return std::nullopt;
    }
    const std::size_t start = last ? (*last + 1) % n : 0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = (start + k) % n;
        if (eligible[i]) return i;
    }
    return std::nullopt;
}

enum class JudgeState { Scan, Grant, WaitDone };
enum class TxFsm { Idle, Send, Stall };

struct GrantRecord {
    std::uint64_t edge = 0;
    std::size_t fifo = 0;
    std::vector<bool> eligible;
};

struct TxStats {
    std::vector<std::uint64_t> packets_sent;  // per FIFO, counted when eof is accepted
    std::uint64_t words_sent = 0;
    std::uint64_t link_stall_edges = 0;  // word presented, link not ready
    std::uint64_t idle_edges = 0;        // nothing to present
    std::uint64_t stray_words = 0;       // non-sof heads dropped by the judge
};

/// Judging FSM plus TX FSM. Each edge: if the presented word was not taken,
/// hold it (Stall). Otherwise fetch the next word of the granted packet, or,
/// with no grant outstanding, judge and fetch the sof of the winner. The grant
/// is released on the edge its eof is accepted and a new one can be issued on
/// that same edge, so packets leave back-to-back.
class TxScheduler : public Component {
public:
    TxScheduler(std::vector<PacketFifo*> fifos, SchedulerConfig cfg, StreamChannel& out)
        : fifos_(std::move(fifos)), cfg_(normalized(std::move(cfg), fifos_.size())), out_(out) {
        for (const PacketFifo* f : fifos_) {
            if (f->config().read_width_bits != 64 || !f->config().fwft)
                throw ConfigError(f->name() + ": TX FIFO read port must be 64 bits wide with first-word fall-through");
        }
        stats_.packets_sent.assign(fifos_.size(), 0);
    }

    void record_grants(bool on) { record_grants_ = on; }

    void evaluate(TimePs) override {
        ++edge_;
        const auto& cur = out_.data.get();
        const bool moved = out_.transfer();
        if (cur && !moved) {
            out_.data.set(cur);
            ++stats_.link_stall_edges;
            tx_ = TxFsm::Stall;
            return;
        }
        if (moved) {
            ++stats_.words_sent;
            if (cur->eof) {
                ++stats_.packets_sent[*granted_];
                granted_.reset();
                judging_ = JudgeState::Scan;
            }
        }
        if (granted_) {
            const auto r = fifos_[*granted_]->read();
            if (!r.valid)
                throw InvariantViolation(fifos_[*granted_]->name() + ": TX underflow mid-packet at edge " +
                                         std::to_string(edge_));
            out_.data.set(to_framed(*r.word));
            tx_ = TxFsm::Send;
            return;
        }
        grant_and_fetch();
    }

    void commit(TimePs) override { out_.data.commit(); }

    const TxStats& stats() const { return stats_; }
    const std::vector<GrantRecord>& grants() const { return grants_; }
    std::optional<std::size_t> granted() const { return granted_; }
    JudgeState judging() const { return judging_; }
    TxFsm tx_state() const { return tx_; }
    bool idle() const { return !granted_ && !out_.data.get(); }
    const SchedulerConfig& config() const { return cfg_; }

private:
    void grant_and_fetch() {
        std::vector<bool> eligible(fifos_.size());
        for (std::size_t i = 0; i < fifos_.size(); ++i) {
            const auto head = fifos_[i]->peek();
            if (head && !head->sof) {
                // Stray word with no open packet: nothing can use it.
                fifos_[i]->read();
                ++stats_.stray_words;
                continue;
            }
            eligible[i] = whole_packet_readable(*fifos_[i]);
        }
        const auto g = judge(eligible, cfg_, last_);
        if (!g) {
            out_.data.set(std::nullopt);
            ++stats_.idle_edges;
            tx_ = TxFsm::Idle;
            judging_ = JudgeState::Scan;
            return;
        }
        judging_ = JudgeState::WaitDone;
        if (record_grants_) grants_.push_back({edge_, *g, eligible});
        granted_ = g;
        last_ = g;
        const auto r = fifos_[*g]->read();
        if (!r.valid) throw InvariantViolation(fifos_[*g]->name() + ": granted FIFO had no readable word");
        out_.data.set(to_framed(*r.word));
        tx_ = TxFsm::Send;
    }

    std::vector<PacketFifo*> fifos_;
    SchedulerConfig cfg_;
    StreamChannel& out_;

    JudgeState judging_ = JudgeState::Scan;
    TxFsm tx_ = TxFsm::Idle;
    std::optional<std::size_t> granted_;
    std::optional<std::size_t> last_;

    TxStats stats_;
    bool record_grants_ = false;
    std::vector<GrantRecord> grants_;
    std::uint64_t edge_ = 0;
};

}  // namespace pwrap
