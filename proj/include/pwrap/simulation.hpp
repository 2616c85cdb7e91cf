#pragma once

// Whole-system run: host link source and sink, RX handler, TX scheduler,
// FIFOs and the test endpoint, wired from a Scenario.
//
// link domain: LinkSource, RxHandler, TxScheduler, LinkSink
// user domain: TestEndpoint, one PacketDrain per RX FIFO the endpoint does not read
// RX FIFOs are written on the link side and read on the user side; TX FIFOs
// the other way round.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pwrap/error.hpp"
#include "pwrap/link_model.hpp"
#include "pwrap/packet_fifo.hpp"
#include "pwrap/rx_path.hpp"
#include "pwrap/scenario.hpp"
#include "pwrap/sim_kernel.hpp"
#include "pwrap/stream.hpp"
#include "pwrap/test_endpoint.hpp"
#include "pwrap/tx_path.hpp"

namespace pwrap {

struct PathStats {
    std::uint64_t offered = 0;
    std::uint64_t delivered = 0;
    std::uint64_t discarded = 0;
    std::uint64_t corrupted = 0;
    std::uint64_t in_flight = 0;
    bool operator==(const PathStats&) const = default;
};

struct FifoStats {
    std::string name;
    std::array<std::uint64_t, 16> occupancy_histogram{};  // bucket = occupancy * 16 / depth, top bucket includes full
    std::size_t max_occupancy = 0;
    bool operator==(const FifoStats&) const = default;
};

struct FaultRecord {
    TimePs time_ps = 0;
    std::string fifo;
    std::size_t slot = 0;  // absolute slot hit, after resolving hdrK
    bool applied = false;  // false when the FIFO had nothing stored there
    std::uint32_t header_dw0 = 0;  // DW0 of the hit packet when it was a header slot
    std::size_t packets_ahead = 0;  // whole packets stored before the hit one
    std::vector<std::uint32_t> victim;  // stored DWs of the hit packet before the flip, sof hits only
    bool operator==(const FaultRecord&) const = default;
};

struct SimStats {
    PathStats rx;
    PathStats tx;
    std::uint64_t payload_bits_delivered = 0;
    std::uint64_t rx_throttle_edges = 0;
    std::uint64_t tx_link_stall_edges = 0;
    TimePs simulated_time_ps = 0;
    std::vector<FifoStats> fifos;
    double measured_gbps = 0;
    double analytic_gbps = 0;
    std::vector<std::uint8_t> led_history;
    std::uint64_t reads_issued = 0;
    std::uint64_t completions_matched = 0;
    std::uint64_t outstanding_tags = 0;
    std::uint64_t protocol_violations = 0;
    std::uint64_t rejected_writes = 0;
    std::uint64_t malformed = 0;
    std::uint64_t link_edges = 0;
    std::uint64_t user_edges = 0;
    std::vector<FaultRecord> faults;
    bool drained = false;
    bool operator==(const SimStats&) const = default;
};

inline nlohmann::ordered_json to_json(const PathStats& p) {
    return {{"offered", p.offered},     {"delivered", p.delivered}, {"discarded", p.discarded},
            {"corrupted", p.corrupted}, {"in_flight", p.in_flight}};
}

inline nlohmann::ordered_json to_json(const SimStats& s) {
    nlohmann::ordered_json j;
    j["rx"] = to_json(s.rx);
    j["tx"] = to_json(s.tx);
    j["payload_bits_delivered"] = s.payload_bits_delivered;
    j["rx_throttle_edges"] = s.rx_throttle_edges;
    j["tx_link_stall_edges"] = s.tx_link_stall_edges;
    j["simulated_time_ps"] = s.simulated_time_ps;
    auto fifos = nlohmann::ordered_json::array();
    for (const auto& f : s.fifos)
        fifos.push_back({{"name", f.name}, {"occupancy_histogram", f.occupancy_histogram}, {"max_occupancy", f.max_occupancy}});
    j["fifos"] = fifos;
    j["measured_gbps"] = s.measured_gbps;
    j["analytic_gbps"] = s.analytic_gbps;
    j["led_history"] = s.led_history;
    j["reads_issued"] = s.reads_issued;
    j["completions_matched"] = s.completions_matched;
    j["outstanding_tags"] = s.outstanding_tags;
    j["protocol_violations"] = s.protocol_violations;
    j["rejected_writes"] = s.rejected_writes;
    j["malformed"] = s.malformed;
    j["link_edges"] = s.link_edges;
    j["user_edges"] = s.user_edges;
    auto faults = nlohmann::ordered_json::array();
    for (const auto& f : s.faults)
        faults.push_back({{"time_ps", f.time_ps},
                          {"fifo", f.fifo},
                          {"slot", f.slot},
                          {"applied", f.applied},
                          {"header_dw0", f.header_dw0},
                          {"packets_ahead", f.packets_ahead}});
    j["faults"] = faults;
    j["drained"] = s.drained;
    return j;
}

struct RunOptions {
    bool trace = false;           // record every known signal regardless of trace.signals
    bool record_packets = false;  // keep offered and received packets for comparison
};

struct RunResult {
    SimStats stats;
    Traces traces;
    std::vector<std::string> trace_selection;  // what a VCD should show
    std::vector<std::vector<std::uint32_t>> offered;   // host-generated TLPs, when recorded
    std::vector<std::vector<std::uint32_t>> received;  // intact at the endpoint, when recorded
    std::vector<Tlp> completions;                      // decoded at the upstream sink, when recorded
};

/// Name of every signal the simulation can trace, for a given scenario.
inline std::vector<std::string> trace_signal_names(const Scenario& s) {
    std::vector<std::string> names;
    for (const char* side : {"rx", "tx"})
        for (const char* f : {"data", "eof", "ready", "sof", "valid"})
            names.push_back(std::string("link.") + side + "." + f);
    names.push_back("rx.state");
    names.push_back("tx.grant");
    names.push_back("endpoint.leds");
    for (const auto& f : s.fifos)
        for (const char* k : {"occupancy", "rd_count", "wr_count"}) names.push_back("fifo." + f.name + "." + k);
    std::sort(names.begin(), names.end());
    return names;
}

class Simulation {
public:
    explicit Simulation(Scenario s, RunOptions opt = {}) : s_(std::move(s)), opt_(opt) {
        validate(s_);
        build();
    }

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    RunResult run() {
        kernel_.run_until(s_.end_ps, [this] { return s_.stop_on_drain && drained(); });
        return finish();
    }

private:
    void build() {
        link_ = kernel_.add_domain("link", s_.effective_link_period(), s_.link_phase_ps);
        user_ = kernel_.add_domain("user", s_.user_period_ps, s_.user_phase_ps);

        for (const auto& f : s_.fifos) {
            fifos_.push_back(std::make_unique<PacketFifo>(f.config, f.name));
            fifo_stats_.push_back(FifoStats{f.name, {}, 0});
        }
        auto index_of = [&](const std::string& name) {
            for (std::size_t i = 0; i < s_.fifos.size(); ++i)
                if (s_.fifos[i].name == name) return i;
            throw ValidationError("fifo", "unknown FIFO " + name);
        };

        std::vector<PacketFifo*> rx, tx;
        std::map<std::string, std::size_t> rx_index, tx_index;
        for (std::size_t i = 0; i < s_.fifos.size(); ++i) {
            if (s_.fifos[i].role == FifoRole::Rx) {
                rx_index[s_.fifos[i].name] = rx.size();
                rx.push_back(fifos_[i].get());
                kernel_.attach_fifo(*fifos_[i], link_, user_);
            } else {
                tx_index[s_.fifos[i].name] = tx.size();
                tx.push_back(fifos_[i].get());
                kernel_.attach_fifo(*fifos_[i], user_, link_);
            }
        }

        RouteTable table;
        for (const auto& r : s_.routes) table.entries.push_back({r.addr_lo, r.addr_hi, r.kinds, rx_index.at(r.fifo)});
        table.default_discard = s_.default_discard;
        if (!s_.default_discard) table.special_fifo = rx_index.at(s_.default_fifo);

        SchedulerConfig sched{s_.policy, {}};
        for (const auto& name : s_.priority) sched.priority.push_back(tx_index.at(name));

        gen_ = std::make_unique<TrafficGenerator>(s_.traffic, s_.seed);
        source_ = std::make_unique<LinkSource>(rx_link_, *gen_, tags_, s_.link, s_.seed ^ 0x5eed0001u);
        source_->record_packets(opt_.record_packets);
        rx_ = std::make_unique<RxHandler>(rx_link_, rx, table, s_.rx_discipline);
        tx_ = std::make_unique<TxScheduler>(tx, sched, tx_link_);
        sink_ = std::make_unique<LinkSink>(tx_link_, s_.traffic.throttle, s_.seed ^ 0x5eed0002u,
                                           [this](AssembledPacket&& p) { on_upstream(std::move(p)); });

        PacketFifo& erx = *fifos_[index_of(s_.endpoint_rx)];
        PacketFifo& etx = *fifos_[index_of(s_.endpoint_tx)];
        endpoint_ = std::make_unique<TestEndpoint>(erx, etx, s_.board, s_.framing);
        endpoint_->record_packets(opt_.record_packets);
        for (std::size_t i = 0; i < s_.fifos.size(); ++i)
            if (s_.fifos[i].role == FifoRole::Rx && s_.fifos[i].name != s_.endpoint_rx)
                drains_.push_back(std::make_unique<PacketDrain>(*fifos_[i]));

        kernel_.attach(link_, *source_);
        kernel_.attach(link_, *rx_);
        kernel_.attach(link_, *tx_);
        kernel_.attach(link_, *sink_);
        kernel_.attach(user_, *endpoint_);
        for (auto& d : drains_) kernel_.attach(user_, *d);

        for (const auto& f : s_.faults) {
            const std::size_t i = index_of(f.fifo);
            kernel_.at(f.time_ps, [this, f, i] { apply_fault(f, *fifos_[i]); });
        }

        trace_ = opt_.trace || !s_.trace_signals.empty();
        tracer_ = Tracer(trace_);
        if (trace_) register_signals();
        kernel_.on_step([this](TimePs t, const std::vector<int>&) { sample(t); });
    }

    void apply_fault(const FaultSpec& f, PacketFifo& fifo) {
        FaultRecord rec{kernel_.next_edge_time(), f.fifo, f.slot, false, 0, 0, {}};
        const std::size_t n = fifo.occupancy();
        std::vector<std::size_t> heads;
        for (std::size_t k = 0; k < n; ++k)
            if (fifo.inspect_slot(k).sof) heads.push_back(k);
        std::optional<std::size_t> slot;
        if (f.header_relative) {
            if (!heads.empty()) slot = heads[f.slot % heads.size()];
        } else if (f.slot < n) {
            slot = f.slot;
        }
        if (slot) {
            const Beat b = fifo.inspect_slot(*slot);
            rec.slot = *slot;
            if (b.sof) {
                rec.header_dw0 = b.dw[0];
                for (std::size_t k = *slot; k < n; ++k) {
                    const Beat w = fifo.inspect_slot(k);
                    for (std::size_t d = 0; d < w.valid_dw; ++d) rec.victim.push_back(w.dw[d]);
                    if (w.eof) break;
                }
            }
            rec.packets_ahead = static_cast<std::size_t>(
                std::count_if(heads.begin(), heads.end(), [&](std::size_t h) { return h < *slot; }));
            fifo.inject_fault(*slot, f.mask, f.marker_mask);
            rec.applied = true;
        }
        faults_.push_back(rec);
    }

    void on_upstream(AssembledPacket&& p) {
        if (p.corrupted) {
            ++tx_corrupted_;
            return;
        }
        Tlp t;
        try {
            t = decode_tlp(p.dws);
        } catch (const Error&) {
            ++tx_corrupted_;
            return;
        }
        if (!verify_digest(p.dws)) {
            ++tx_corrupted_;
            return;
        }
        ++tx_delivered_;
        if (is_completion(t.kind)) tags_.match_completion(t);  // UnknownTag propagates
        if (opt_.record_packets) completions_.push_back(std::move(t));
    }

    bool drained() const {
        if (!source_->drained() || !rx_->idle() || !tx_->idle() || sink_->mid_packet() || !endpoint_->idle()) return false;
        for (const auto& d : drains_)
            if (!d->idle()) return false;
        for (const auto& f : fifos_)
            if (f->occupancy() != 0 || f->output_latched()) return false;
        return tags_.outstanding() == 0;
    }

    void register_signals() {
        auto add = [&](const std::string& name, unsigned width) { ids_[name] = tracer_.add_signal(name, width); };
        for (const char* side : {"rx", "tx"}) {
            const std::string p = std::string("link.") + side + ".";
            add(p + "data", 64);
            add(p + "valid", 1);
            add(p + "sof", 1);
            add(p + "eof", 1);
            add(p + "ready", 1);
        }
        add("rx.state", 2);
        add("tx.grant", 8);
        add("endpoint.leds", 8);
        for (const auto& f : fifos_) {
            const std::string p = "fifo." + f->name() + ".";
            add(p + "wr_count", 32);
            add(p + "rd_count", 32);
            add(p + "occupancy", 32);
        }
    }

    void sample_channel(const std::string& side, const StreamChannel& c, TimePs t) {
        const auto& d = c.data.get();
        const std::string p = "link." + side + ".";
        tracer_.sample(ids_[p + "valid"], t, d.has_value());
        tracer_.sample(ids_[p + "ready"], t, c.ready.get());
        tracer_.sample(ids_[p + "data"], t, d ? d->data : 0);
        tracer_.sample(ids_[p + "sof"], t, d && d->sof);
        tracer_.sample(ids_[p + "eof"], t, d && d->eof);
    }

    void sample(TimePs t) {
        for (std::size_t i = 0; i < fifos_.size(); ++i) {
            const std::size_t occ = fifos_[i]->occupancy();
            const std::size_t depth = fifos_[i]->config().depth_write_words;
            auto& fs = fifo_stats_[i];
            ++fs.occupancy_histogram[std::min<std::size_t>(15, occ * 16 / depth)];
            fs.max_occupancy = std::max(fs.max_occupancy, occ);
        }
        if (!trace_) return;
        sample_channel("rx", rx_link_, t);
        sample_channel("tx", tx_link_, t);
        tracer_.sample(ids_["rx.state"], t, static_cast<std::uint64_t>(rx_->state()));
        const auto g = tx_->granted();
        tracer_.sample(ids_["tx.grant"], t, g ? *g + 1 : 0);
        tracer_.sample(ids_["endpoint.leds"], t, endpoint_->board().leds);
        for (const auto& f : fifos_) {
            const std::string p = "fifo." + f->name() + ".";
            const auto c = f->counts();
            tracer_.sample(ids_[p + "wr_count"], t, c.wr_data_count);
            tracer_.sample(ids_[p + "rd_count"], t, c.rd_data_count);
            tracer_.sample(ids_[p + "occupancy"], t, f->occupancy());
        }
    }

    RunResult finish() {
        RunResult out;
        SimStats& st = out.stats;
        st.drained = drained();
        st.simulated_time_ps = st.drained ? kernel_.now() : s_.end_ps;

        const auto& rs = rx_->stats();
        const auto& es = endpoint_->stats();
        st.rx.offered = source_->offered();
        st.rx.discarded = rs.discarded;
        st.rx.delivered = es.delivered;
        st.rx.corrupted = es.corrupted;
        st.payload_bits_delivered = es.payload_bits;
        for (const auto& d : drains_) {
            st.rx.delivered += d->delivered();
            st.rx.corrupted += d->corrupted();
            st.payload_bits_delivered += d->payload_bits();
        }
        st.rx.in_flight = remainder(st.rx, "rx");

        st.tx.offered = es.completions;
        st.tx.delivered = tx_delivered_;
        st.tx.corrupted = tx_corrupted_;
        st.tx.in_flight = remainder(st.tx, "tx");

        st.rx_throttle_edges = rs.throttle_edges;
        st.tx_link_stall_edges = tx_->stats().link_stall_edges;
        st.fifos = fifo_stats_;
        st.measured_gbps = effective_throughput(st.payload_bits_delivered, st.simulated_time_ps);
        st.analytic_gbps = effective_throughput(s_.link, s_.traffic.payload_bytes);
        st.led_history = es.led_history;
        st.reads_issued = tags_.issued();
        st.completions_matched = tags_.matched();
        st.outstanding_tags = tags_.outstanding();
        st.protocol_violations = rs.protocol_violations;
        st.rejected_writes = rs.rejected_writes;
        st.malformed = rs.malformed;
        st.link_edges = kernel_.edges(link_);
        st.user_edges = kernel_.edges(user_);
        st.faults = faults_;

        if (rs.rejected_writes != 0) throw InvariantViolation("RX handler had a FIFO write rejected");

        out.traces = tracer_.finish();
        if (trace_) {
            const bool all = opt_.trace || std::find(s_.trace_signals.begin(), s_.trace_signals.end(), "all") != s_.trace_signals.end();
            out.trace_selection = all ? trace_signal_names(s_) : s_.trace_signals;
        }
        if (opt_.record_packets) {
            out.offered = source_->offered_packets();
            out.received = endpoint_->received();
            out.completions = completions_;
        }
        return out;
    }

    // In-flight packets are whatever is left over. Without faults that can
    // never be negative; a fault can split or merge spans, so it is clamped.
    std::uint64_t remainder(const PathStats& p, const char* path) const {
        const std::uint64_t done = p.delivered + p.discarded + p.corrupted;
        if (done <= p.offered) return p.offered - done;
        if (faults_.empty() && s_.framing == FramingMode::Framed)
            throw InvariantViolation(std::string(path) + ": more packets accounted for than offered");
        return 0;
    }

    Scenario s_;
    RunOptions opt_;
    Kernel kernel_;
    int link_ = 0;
    int user_ = 0;

    std::vector<std::unique_ptr<PacketFifo>> fifos_;
    std::vector<FifoStats> fifo_stats_;
    StreamChannel rx_link_;
    StreamChannel tx_link_;
    TagTracker tags_;
    std::unique_ptr<TrafficGenerator> gen_;
    std::unique_ptr<LinkSource> source_;
    std::unique_ptr<RxHandler> rx_;
    std::unique_ptr<TxScheduler> tx_;
    std::unique_ptr<LinkSink> sink_;
    std::unique_ptr<TestEndpoint> endpoint_;
    std::vector<std::unique_ptr<PacketDrain>> drains_;

    std::uint64_t tx_delivered_ = 0;
    std::uint64_t tx_corrupted_ = 0;
    std::vector<FaultRecord> faults_;
    std::vector<Tlp> completions_;

    bool trace_ = false;
    Tracer tracer_;
    std::map<std::string, int> ids_;
};

inline RunResult run(const Scenario& s, RunOptions opt = {}) {
    Simulation sim(s, opt);
    return sim.run();
}

}  // namespace pwrap
