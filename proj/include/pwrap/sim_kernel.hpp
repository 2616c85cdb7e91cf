#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pwrap/error.hpp"
#include "pwrap/packet_fifo.hpp"

namespace pwrap {

using TimePs = std::int64_t;

struct ClockDomain {
    int id = 0;
    std::string name;
    TimePs period_ps = 4000;
    TimePs phase_ps = 0;

    TimePs edge_time(std::uint64_t k) const { return phase_ps + static_cast<TimePs>(k) * period_ps; }
    /// Edges in [0, t_end]: floor((t_end - phase) / period) + 1, or 0 before the first edge.
    std::uint64_t edges_through(TimePs t_end) const {
        if (t_end < phase_ps) return 0;
        return static_cast<std::uint64_t>((t_end - phase_ps) / period_ps) + 1;
    }
};

/// A synchronous element. On every edge of its domain the kernel calls
/// evaluate() on all firing components, then commit() on all of them.
/// evaluate() may read committed state of any component but must only stage
/// its own updates; shared FIFOs are safe because each port observes the other
/// through synchronizers that advance at commit.
class Component {
public:
    virtual ~Component() = default;
    virtual void evaluate(TimePs now) = 0;
    virtual void commit(TimePs /*now*/) {}
};

/// Two-phase register: writers stage into next(), readers see get() until commit.
template <class T>
class Register {
public:
    Register() = default;
    explicit Register(T init) : cur_(init), next_(init) {}
    const T& get() const { return cur_; }
    void set(const T& v) { next_ = v; }
    void commit() { cur_ = next_; }

private:
    T cur_{};
    T next_{};
};

/// Deterministic multi-clock cycle scheduler. Simultaneous edges fire in
/// ascending domain id; within a time step all evaluations precede all commits.
class Kernel {
public:
    int add_domain(std::string name, TimePs period_ps, TimePs phase_ps = 0) {
        if (period_ps <= 0) throw ConfigError("clock " + name + ": period must be positive");
        if (phase_ps < 0) throw ConfigError("clock " + name + ": phase must be non-negative");
        const int id = static_cast<int>(domains_.size());
        domains_.push_back({id, std::move(name), period_ps, phase_ps});
        per_domain_.emplace_back();
        edge_index_.push_back(0);
        return id;
    }

    const std::vector<ClockDomain>& domains() const { return domains_; }
    const ClockDomain& domain(int id) const { return domains_.at(static_cast<std::size_t>(id)); }

    void attach(int domain_id, Component& c) { per_domain_.at(static_cast<std::size_t>(domain_id)).components.push_back(&c); }

    void attach_fifo(PacketFifo& f, int write_domain, int read_domain) {
        per_domain_.at(static_cast<std::size_t>(write_domain)).fifo_writers.push_back(&f);
        per_domain_.at(static_cast<std::size_t>(read_domain)).fifo_readers.push_back(&f);
    }

    /// Action run at `time_ps`, before evaluation of any edge at that time.
    /// Actions scheduled between edges run ahead of the next edge.
    void at(TimePs time_ps, std::function<void()> action) { actions_.emplace(time_ps, std::move(action)); }

    /// Called after every commit phase with the time and the ids that fired.
    void on_step(std::function<void(TimePs, const std::vector<int>&)> hook) { hooks_.push_back(std::move(hook)); }

    TimePs now() const { return now_; }
    std::uint64_t edges(int domain_id) const { return edge_index_.at(static_cast<std::size_t>(domain_id)); }

    TimePs next_edge_time() const {
        TimePs t = std::numeric_limits<TimePs>::max();
        for (const auto& d : domains_) t = std::min(t, d.edge_time(edge_index_[static_cast<std::size_t>(d.id)]));
        return t;
    }

    /// Processes every edge at the next edge time.
    void step() {
        if (domains_.empty()) throw ConfigError("kernel has no clock domains");
        const TimePs t = next_edge_time();
        while (!actions_.empty() && actions_.begin()->first <= t) {
            auto node = actions_.extract(actions_.begin());
            node.mapped()();
        }
        fired_.clear();
        for (const auto& d : domains_)
            if (d.edge_time(edge_index_[static_cast<std::size_t>(d.id)]) == t) fired_.push_back(d.id);
        now_ = t;
        for (int id : fired_)
            for (Component* c : per_domain_[static_cast<std::size_t>(id)].components) c->evaluate(t);
        for (int id : fired_) {
            auto& pd = per_domain_[static_cast<std::size_t>(id)];
            for (Component* c : pd.components) c->commit(t);
        }
        for (int id : fired_) {
            auto& pd = per_domain_[static_cast<std::size_t>(id)];
            for (PacketFifo* f : pd.fifo_writers) f->tick_write_domain();
            for (PacketFifo* f : pd.fifo_readers) f->tick_read_domain();
            ++edge_index_[static_cast<std::size_t>(id)];
        }
        for (auto& h : hooks_) h(t, fired_);
    }

    /// Runs every edge with time <= t_end, or until `stop` returns true after a step.
    void run_until(TimePs t_end, const std::function<bool()>& stop = {}) {
        while (next_edge_time() <= t_end) {
            step();
            if (stop && stop()) break;
        }
    }

private:
    struct PerDomain {
        std::vector<Component*> components;
        std::vector<PacketFifo*> fifo_writers;
        std::vector<PacketFifo*> fifo_readers;
    };

    std::vector<ClockDomain> domains_;
    std::vector<PerDomain> per_domain_;
    std::vector<std::uint64_t> edge_index_;
    std::multimap<TimePs, std::function<void()>> actions_;
    std::vector<std::function<void(TimePs, const std::vector<int>&)>> hooks_;
    std::vector<int> fired_;
    TimePs now_ = 0;
};

struct TraceEvent {
    TimePs time_ps = 0;
    std::string signal;
    std::uint64_t value = 0;
    bool operator==(const TraceEvent&) const = default;
};

struct TraceSignal {
    std::string name;
    unsigned width = 1;
    bool operator==(const TraceSignal&) const = default;
};

struct Traces {
    std::vector<TraceSignal> signals;  // sorted by name
    std::vector<TraceEvent> events;    // ordered by time, then signal name

    bool operator==(const Traces&) const = default;
};

/// Change-only waveform recorder. Disabled recorders ignore every call.
class Tracer {
public:
    explicit Tracer(bool enabled = false) : enabled_(enabled) {}
    bool enabled() const { return enabled_; }

    int add_signal(const std::string& name, unsigned width) {
        if (!enabled_) return -1;
        for (const auto& s : signals_)
            if (s.name == name) throw ConfigError("duplicate trace signal " + name);
        signals_.push_back({name, width});
        last_.push_back(std::nullopt);
        return static_cast<int>(signals_.size() - 1);
    }

    void sample(int id, TimePs t, std::uint64_t value) {
        if (!enabled_ || id < 0) return;
        auto& last = last_[static_cast<std::size_t>(id)];
        if (last && *last == value) return;
        last = value;
        raw_.push_back({t, id, value});
    }

    /// Sorts signals by name and events by (time, name) so the result does
    /// not depend on registration order.
    Traces finish() const {
        Traces out;
        std::vector<int> order(signals_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return signals_[static_cast<std::size_t>(a)].name < signals_[static_cast<std::size_t>(b)].name;
        });
        std::vector<int> rank(signals_.size());
        for (std::size_t r = 0; r < order.size(); ++r) {
            rank[static_cast<std::size_t>(order[r])] = static_cast<int>(r);
            out.signals.push_back(signals_[static_cast<std::size_t>(order[r])]);
        }
        auto raw = raw_;
        std::stable_sort(raw.begin(), raw.end(), [&](const Raw& a, const Raw& b) {
            if (a.t != b.t) return a.t < b.t;
            return rank[static_cast<std::size_t>(a.id)] < rank[static_cast<std::size_t>(b.id)];
        });
        out.events.reserve(raw.size());
        for (const auto& r : raw) out.events.push_back({r.t, signals_[static_cast<std::size_t>(r.id)].name, r.value});
        return out;
    }

private:
    struct Raw {
        TimePs t;
        int id;
        std::uint64_t value;
    };
    bool enabled_;
    std::vector<TraceSignal> signals_;
    std::vector<std::optional<std::uint64_t>> last_;
    std::vector<Raw> raw_;
};

}  // namespace pwrap
