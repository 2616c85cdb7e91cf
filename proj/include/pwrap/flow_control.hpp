#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "pwrap/error.hpp"
#include "pwrap/framing.hpp"
#include "pwrap/packet_fifo.hpp"
#include "pwrap/sim_kernel.hpp"

namespace pwrap {

// Writer-side disciplines for avoiding writes into a full FIFO:
//   Ack        - attempt every edge, retry the same word when not acknowledged.
//   SpaceCount - start a packet only when the free space covers all of it.
//   Threshold  - start a packet only while prog_full is deasserted.
enum class ProducerStrategy { Ack, SpaceCount, Threshold };

// Reader-side duals:
//   Valid      - read every edge, keep words flagged valid.
//   CountGate  - start a packet only once the whole packet is readable.
//   Threshold  - start a packet only while prog_empty is deasserted.
enum class ConsumerStrategy { Valid, CountGate, Threshold };

inline constexpr std::string_view to_string(ProducerStrategy s) {
    switch (s) {
        case ProducerStrategy::Ack: return "ack";
        case ProducerStrategy::SpaceCount: return "space_count";
        case ProducerStrategy::Threshold: return "threshold";
    }
    return "?";
}

inline constexpr std::string_view to_string(ConsumerStrategy s) {
    switch (s) {
        case ConsumerStrategy::Valid: return "valid";
        case ConsumerStrategy::CountGate: return "count_gate";
        case ConsumerStrategy::Threshold: return "threshold";
    }
    return "?";
}

/// Words a packet of `dw` double-words occupies on a port `lanes` DWs wide.
inline std::size_t words_for(std::size_t dw, std::size_t lanes) { return (dw + lanes - 1) / lanes; }

/// Checks that a Threshold producer can never overflow: starting a packet
/// while prog_full is low must leave room for the largest packet.
inline void check_threshold_producer(const FifoConfig& c, std::size_t max_packet_words) {
    if (c.prog_full_threshold + max_packet_words > c.depth_write_words)
        throw ConfigError("threshold producer needs prog_full_threshold <= depth - max packet words (" +
                          std::to_string(c.depth_write_words) + " - " + std::to_string(max_packet_words) + ")");
}

/// Checks that a Threshold consumer never starts a packet it cannot finish.
inline void check_threshold_consumer(const FifoConfig& c, std::size_t max_packet_words) {
    if (c.prog_empty_threshold + 1 < max_packet_words)
        throw ConfigError("threshold consumer needs prog_empty_threshold >= max packet words - 1");
}

class PacketProducer {
public:
    enum class Action { Idle, Wrote, Rejected, Waiting };

    PacketProducer(PacketFifo& fifo, ProducerStrategy strategy, std::size_t max_packet_words)
        : fifo_(fifo), strategy_(strategy) {
        if (max_packet_words > fifo.config().depth_write_words)
            throw ConfigError(fifo.name() + ": packets of " + std::to_string(max_packet_words) +
                              " words exceed depth");
        if (strategy == ProducerStrategy::Threshold) check_threshold_producer(fifo.config(), max_packet_words);
    }

    ProducerStrategy strategy() const { return strategy_; }

    void enqueue(std::span<const std::uint32_t> packet_dws) {
        pending_.push_back(frame_beats(packet_dws, fifo_.config().write_lanes()));
    }

    /// One writer-domain edge. `allowed` false models a writer that has
    /// nothing to do this edge (throttling).
    Action step(bool allowed = true) {
        if (!allowed || pending_.empty()) return Action::Idle;
        auto& pkt = pending_.front();
        if (next_ == 0 && strategy_ != ProducerStrategy::Ack && !started_) {
            const auto c = fifo_.counts();
            const std::size_t depth = fifo_.config().depth_write_words;
            const bool go = strategy_ == ProducerStrategy::SpaceCount
                                ? depth - std::min(depth, c.wr_data_count) >= pkt.size()
                                : !fifo_.flags().prog_full;
            if (!go) {
                ++wait_edges_;
                return Action::Waiting;
            }
            started_ = true;
        }
        const auto out = fifo_.write(pkt[next_]);
        if (!out.accepted) {
            if (strategy_ != ProducerStrategy::Ack)
                throw InvariantViolation(fifo_.name() + ": write rejected mid-packet under " +
                                         std::string(to_string(strategy_)));
            ++rejected_;
            return Action::Rejected;
        }
        ++words_written_;
        if (++next_ == pkt.size()) {
            pending_.pop_front();
            next_ = 0;
            started_ = false;
            ++packets_written_;
        }
        return Action::Wrote;
    }

    bool idle() const { return pending_.empty(); }
    std::size_t pending_packets() const { return pending_.size(); }
    bool mid_packet() const { return next_ > 0; }
    std::uint64_t rejected_writes() const { return rejected_; }
    std::uint64_t wait_edges() const { return wait_edges_; }
    std::uint64_t words_written() const { return words_written_; }
    std::uint64_t packets_written() const { return packets_written_; }

private:
    PacketFifo& fifo_;
    ProducerStrategy strategy_;
    std::deque<std::vector<Beat>> pending_;
    std::size_t next_ = 0;
    bool started_ = false;
    std::uint64_t rejected_ = 0;
    std::uint64_t wait_edges_ = 0;
    std::uint64_t words_written_ = 0;
    std::uint64_t packets_written_ = 0;
};

/// Whether the reader may start the head packet: the read count covers the
/// length announced in the head header, or an eof marker is already visible
/// (which also bounds packets whose length field was corrupted).
inline bool whole_packet_readable(const PacketFifo& fifo) {
    const auto head = fifo.peek();
    if (!head) return false;
    if (fifo.packet_visible()) return true;
    if (!head->sof) return true;  // stray word: let the reader drop it
    const auto dw = packet_dw_from_header(head->dw[0]);
    if (!dw) return true;
    const std::size_t need = std::min(words_for(*dw, fifo.config().read_lanes()), fifo.config().depth_read_words());
    return fifo.counts().rd_data_count >= need;
}

class PacketConsumer {
public:
    using Sink = std::function<void(AssembledPacket&&)>;

    PacketConsumer(PacketFifo& fifo, ConsumerStrategy strategy, std::size_t max_packet_read_words, Sink sink)
        : fifo_(fifo), strategy_(strategy), sink_(std::move(sink)) {
        if (strategy != ConsumerStrategy::Valid && !fifo.config().fwft)
            throw ConfigError(fifo.name() + ": " + std::string(to_string(strategy)) +
                              " reader requires a first-word fall-through FIFO");
        if (strategy == ConsumerStrategy::Threshold) check_threshold_consumer(fifo.config(), max_packet_read_words);
    }

    ConsumerStrategy strategy() const { return strategy_; }

    /// One reader-domain edge; returns the number of words taken.
    std::size_t step(bool allowed = true) {
        if (strategy_ == ConsumerStrategy::Valid) {
            const auto r = fifo_.read(allowed);
            if (r.valid) {
                take(*r.word);
                return 1;
            }
            return 0;
        }
        if (!allowed) return 0;
        if (!in_packet_) {
            // A visible eof also releases the Threshold reader so a short final
            // packet below the threshold is not stranded.
            const bool go = strategy_ == ConsumerStrategy::CountGate
                                ? whole_packet_readable(fifo_)
                                : (!fifo_.flags().prog_empty && fifo_.peek()) || fifo_.packet_visible();
            if (!go) {
                if (!fifo_.flags().empty) ++wait_edges_;
                return 0;
            }
            in_packet_ = true;
        }
        const auto r = fifo_.read();
        if (!r.valid) {
            ++underruns_;
            return 0;
        }
        take(*r.word);
        if (r.word->eof || !assembler_.open()) in_packet_ = false;
        return 1;
    }

    const DeframeDiagnostics& diagnostics() const { return assembler_.diagnostics(); }
    bool mid_packet() const { return assembler_.open(); }
    std::uint64_t words_read() const { return words_read_; }
    std::uint64_t wait_edges() const { return wait_edges_; }
    std::uint64_t underruns() const { return underruns_; }

private:
    void take(const Beat& b) {
        ++words_read_;
        assembler_.push(b, [&](AssembledPacket&& p) { sink_(std::move(p)); });
    }

    PacketFifo& fifo_;
    ConsumerStrategy strategy_;
    Sink sink_;
    PacketAssembler assembler_;
    bool in_packet_ = false;
    std::uint64_t words_read_ = 0;
    std::uint64_t wait_edges_ = 0;
    std::uint64_t underruns_ = 0;
};

/// Settings for a standalone producer -> FIFO -> consumer run on two clocks.
struct FlowExperiment {
    FifoConfig fifo;
    ProducerStrategy producer = ProducerStrategy::Ack;
    ConsumerStrategy consumer = ConsumerStrategy::Valid;
    double write_idle_probability = 0.0;
    double read_idle_probability = 0.0;
    TimePs write_period_ps = 4000;
    TimePs read_period_ps = 5000;
    std::uint64_t seed = 1;
    std::size_t max_edges = 100'000'000;
};

struct FlowResult {
    std::vector<std::vector<std::uint32_t>> received;
    DeframeDiagnostics diagnostics;
    std::uint64_t rejected_writes = 0;
    std::uint64_t write_edges = 0;
    std::uint64_t read_edges = 0;
    std::size_t max_occupancy = 0;
    bool drained = false;
};

/// Bernoulli draw from a 64-bit engine with 53-bit resolution.
inline bool bernoulli(std::mt19937_64& rng, double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
}

/// Pushes `packets` through one FIFO with the given disciplines and random
/// idle edges on both sides; returns what the reader reassembled.
inline FlowResult run_flow_experiment(const FlowExperiment& x, const std::vector<std::vector<std::uint32_t>>& packets) {
    PacketFifo fifo(x.fifo, "dut");
    std::size_t max_dw = 1;
    for (const auto& p : packets) max_dw = std::max(max_dw, p.size());

    FlowResult res;
    PacketProducer producer(fifo, x.producer, words_for(max_dw, x.fifo.write_lanes()));
    PacketConsumer consumer(fifo, x.consumer, words_for(max_dw, x.fifo.read_lanes()),
                            [&](AssembledPacket&& p) {
                                if (!p.corrupted) res.received.push_back(std::move(p.dws));
                            });
    for (const auto& p : packets) producer.enqueue(p);

    std::mt19937_64 wr_rng(x.seed * 0x9E3779B97F4A7C15ull + 1);
    std::mt19937_64 rd_rng(x.seed * 0x9E3779B97F4A7C15ull + 2);

    struct Writer : Component {
        PacketProducer* p;
        std::mt19937_64* rng;
        double idle;
        void evaluate(TimePs) override { p->step(!bernoulli(*rng, idle)); }
    } writer;
    writer.p = &producer;
    writer.rng = &wr_rng;
    writer.idle = x.write_idle_probability;

    struct Reader : Component {
        PacketConsumer* c;
        std::mt19937_64* rng;
        double idle;
        void evaluate(TimePs) override { c->step(!bernoulli(*rng, idle)); }
    } reader;
    reader.c = &consumer;
    reader.rng = &rd_rng;
    reader.idle = x.read_idle_probability;

    Kernel k;
    const int wd = k.add_domain("write", x.write_period_ps);
    const int rd = k.add_domain("read", x.read_period_ps);
    k.attach(wd, writer);
    k.attach(rd, reader);
    k.attach_fifo(fifo, wd, rd);

    std::size_t steps = 0;
    while (steps++ < x.max_edges) {
        k.step();
        res.max_occupancy = std::max(res.max_occupancy, fifo.occupancy());
        if (producer.idle() && fifo.occupancy() == 0 && !fifo.output_latched() && !consumer.mid_packet()) {
            res.drained = true;
            break;
        }
    }
    res.diagnostics = consumer.diagnostics();
    res.rejected_writes = producer.rejected_writes();
    res.write_edges = k.edges(wd);
    res.read_edges = k.edges(rd);
    return res;
}

}  // namespace pwrap
