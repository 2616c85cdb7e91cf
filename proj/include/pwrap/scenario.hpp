#pragma once

// Scenario files: UTF-8 lines of `section.key = value`, `#` starts a comment.
//
//   clock.link.period_ps   link-side interface clock (default: derived from link.*)
//   clock.link.phase_ps
//   clock.user.period_ps   user clock, 4000 (250 MHz)
//   clock.user.phase_ps
//   fifo.NAME.role         rx | tx
//   fifo.NAME.write_width  32 | 64 | 128
//   fifo.NAME.read_width
//   fifo.NAME.depth        write words, power of two >= 16
//   fifo.NAME.fwft         true | false
//   fifo.NAME.prog_full    write words (default: depth)
//   fifo.NAME.prog_empty   read words (default: 0)
//   fifo.NAME.sync_latency
//   route.N                LO..HI KINDS -> NAME    KINDS: all|writes|reads|completions|raw, joined by ','
//   route.default          discard | NAME
//   rx.discipline          space_count | threshold
//   scheduler.policy       strict | round_robin
//   scheduler.priority     NAME,NAME,...  (highest first)
//   traffic.kind           write_stream | read_stream | mixed | idle
//   traffic.payload_bytes, traffic.count (0 = unlimited), traffic.gap_min, traffic.gap_max,
//   traffic.throttle, traffic.base_address, traffic.window_bytes, traffic.mix (e.g. WWR),
//   traffic.write_values (comma list), traffic.digest, traffic.requester_id, traffic.read_length_dw
//   link.lanes, link.raw_gbps, link.encoding, link.framing_bytes, link.dllp_overhead
//   endpoint.rx_fifo, endpoint.tx_fifo, endpoint.switches, endpoint.completer_id
//   framing.mode           framed | length_prefixed
//   fault.N                TIME_PS FIFO SLOT MASK [MARKERS]   SLOT: index, or hdrK for the K-th stored header
//   sim.end_ps, sim.seed, sim.stop_on_drain
//   trace.signals          comma list of signal names, or all
//
// Defaults describe the write-stream setup: one RX FIFO rx0 holding the
// 0xFD000000 window, one TX FIFO tx0, Gen1 x1 link.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pwrap/error.hpp"
#include "pwrap/link_model.hpp"
#include "pwrap/packet_fifo.hpp"
#include "pwrap/rx_path.hpp"
#include "pwrap/sim_kernel.hpp"
#include "pwrap/test_endpoint.hpp"
#include "pwrap/tx_path.hpp"

namespace pwrap {

enum class FifoRole { Rx, Tx };

struct FifoSpec {
    std::string name;
    FifoRole role = FifoRole::Rx;
    FifoConfig config;
    bool prog_full_set = false;
    bool operator==(const FifoSpec&) const = default;
};

struct RouteSpec {
    std::uint64_t addr_lo = 0;
    std::uint64_t addr_hi = 0;
    KindSet kinds = kAllKinds;
    std::string fifo;
    bool operator==(const RouteSpec&) const = default;
};

struct FaultSpec {
    TimePs time_ps = 0;
    std::string fifo;
    std::size_t slot = 0;
    bool header_relative = false;  // slot counts stored headers, not words
    std::uint64_t mask = 0;
    std::uint8_t marker_mask = 0;
    bool operator==(const FaultSpec&) const = default;
};

struct Scenario {
    TimePs link_period_ps = 0;  // 0 = derived from link params
    TimePs link_phase_ps = 0;
    TimePs user_period_ps = 4000;
    TimePs user_phase_ps = 0;
    std::vector<FifoSpec> fifos;
    std::vector<RouteSpec> routes;
    bool default_discard = true;
    std::string default_fifo;
    RxDiscipline rx_discipline = RxDiscipline::SpaceCount;
    SchedulerPolicy policy = SchedulerPolicy::StrictPriority;
    std::vector<std::string> priority;
    TrafficProfile traffic;
    LinkParams link;
    std::string endpoint_rx = "rx0";
    std::string endpoint_tx = "tx0";
    BoardState board;
    FramingMode framing = FramingMode::Framed;
    std::vector<FaultSpec> faults;
    TimePs end_ps = 1'000'000'000;  // 1 ms
    std::uint64_t seed = 1;
    bool stop_on_drain = true;
    std::vector<std::string> trace_signals;

    const FifoSpec* find_fifo(const std::string& name) const {
        for (const auto& f : fifos)
            if (f.name == name) return &f;
        return nullptr;
    }
    TimePs effective_link_period() const { return link_period_ps > 0 ? link_period_ps : pwrap::link_period_ps(link); }

    bool operator==(const Scenario&) const = default;
};

inline Scenario default_scenario() {
    Scenario s;
    FifoSpec rx{"rx0", FifoRole::Rx, {}, false};
    FifoSpec tx{"tx0", FifoRole::Tx, {}, false};
    s.fifos = {rx, tx};
    s.routes = {{0xFD000000, 0xFD000FFF, kAllKinds, "rx0"}};
    return s;
}

namespace scenario_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

inline std::uint64_t parse_uint(const std::string& v, std::size_t line) {
    std::uint64_t out = 0;
    std::string_view s = v;
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        s.remove_prefix(2);
        base = 16;
    }
    std::string digits;
    for (char c : s)
        if (c != '_') digits.push_back(c);
    const auto r = std::from_chars(digits.data(), digits.data() + digits.size(), out, base);
    if (digits.empty() || r.ec != std::errc() || r.ptr != digits.data() + digits.size())
        throw ParseError(line, "expected an unsigned integer, got '" + v + "'");
    return out;
}

inline double parse_double(const std::string& v, std::size_t line) {
    double out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw ParseError(line, "expected a number, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& v, std::size_t line) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError(line, "expected true or false, got '" + v + "'");
}

template <class T>
T narrow(std::uint64_t v, const std::string& key, std::uint64_t max) {
    if (v > max) throw ValidationError(key, "value " + std::to_string(v) + " above " + std::to_string(max));
    return static_cast<T>(v);
}

inline KindSet parse_kinds(const std::string& v, std::size_t line) {
    KindSet k = 0;
    for (const auto& part : split(v, ',')) {
        if (part == "all") k |= kAllKinds;
        else if (part == "writes") k |= kWriteKinds;
        else if (part == "reads") k |= kReadKinds;
        else if (part == "completions") k |= kCompletionKinds;
        else if (part == "raw") k |= kind_bit(TlpKind::Raw);
        else throw ParseError(line, "unknown kind set '" + part + "'");
    }
    return k;
}

inline RouteSpec parse_route(const std::string& v, std::size_t line) {
    // LO..HI KINDS -> NAME
    const auto arrow = v.find("->");
    if (arrow == std::string::npos) throw ParseError(line, "route needs '-> FIFO'");
    const auto lhs = words(v.substr(0, arrow));
    const std::string target = trim(v.substr(arrow + 2));
    if (lhs.size() != 2 || target.empty()) throw ParseError(line, "route grammar is 'LO..HI KINDS -> FIFO'");
    const auto dots = lhs[0].find("..");
    if (dots == std::string::npos) throw ParseError(line, "address range must be LO..HI");
    RouteSpec r;
    r.addr_lo = parse_uint(lhs[0].substr(0, dots), line);
    r.addr_hi = parse_uint(lhs[0].substr(dots + 2), line);
    r.kinds = parse_kinds(lhs[1], line);
    r.fifo = target;
    return r;
}

inline FaultSpec parse_fault(const std::string& v, std::size_t line) {
    const auto w = words(v);
    if (w.size() != 4 && w.size() != 5) throw ParseError(line, "fault grammar is 'TIME_PS FIFO SLOT MASK [MARKERS]'");
    FaultSpec f;
    f.time_ps = static_cast<TimePs>(parse_uint(w[0], line));
    f.fifo = w[1];
    if (w[2].rfind("hdr", 0) == 0) {
        f.header_relative = true;
        f.slot = parse_uint(w[2].substr(3), line);
    } else {
        f.slot = parse_uint(w[2], line);
    }
    f.mask = parse_uint(w[3], line);
    if (w.size() == 5) f.marker_mask = static_cast<std::uint8_t>(parse_uint(w[4], line) & 0x3);
    return f;
}

}  // namespace scenario_detail

/// Applies one `key = value` setting. Routes and faults are keyed by their
/// index so later lines replace earlier ones with the same index.
class ScenarioBuilder {
public:
    ScenarioBuilder() : s_(default_scenario()) {}
    explicit ScenarioBuilder(Scenario base) : s_(std::move(base)) {
        for (std::size_t i = 0; i < s_.routes.size(); ++i) routes_[i] = s_.routes[i];
        for (std::size_t i = 0; i < s_.faults.size(); ++i) faults_[i] = s_.faults[i];
        routes_from_file_ = false;
    }

    void set(const std::string& key, const std::string& value, std::size_t line) {
        using namespace scenario_detail;
        const auto parts = split(key, '.');
        const std::string& sec = parts[0];
        auto unknown = [&] { throw ParseError(line, "unknown key '" + key + "'"); };
        auto u = [&] { return parse_uint(value, line); };

        if (sec == "clock" && parts.size() == 3) {
            const bool link = parts[1] == "link";
            if (!link && parts[1] != "user") unknown();
            TimePs& period = link ? s_.link_period_ps : s_.user_period_ps;
            TimePs& phase = link ? s_.link_phase_ps : s_.user_phase_ps;
            if (parts[2] == "period_ps") period = static_cast<TimePs>(u());
            else if (parts[2] == "phase_ps") phase = static_cast<TimePs>(u());
            else unknown();
        } else if (sec == "fifo" && parts.size() == 3) {
            FifoSpec& f = fifo(parts[1]);
            const std::string& k = parts[2];
            if (k == "role") {
                if (value == "rx") f.role = FifoRole::Rx;
                else if (value == "tx") f.role = FifoRole::Tx;
                else throw ParseError(line, "role must be rx or tx");
            } else if (k == "write_width") f.config.write_width_bits = narrow<unsigned>(u(), key, 1024);
            else if (k == "read_width") f.config.read_width_bits = narrow<unsigned>(u(), key, 1024);
            else if (k == "depth") f.config.depth_write_words = narrow<std::size_t>(u(), key, 1u << 24);
            else if (k == "fwft") f.config.fwft = parse_bool(value, line);
            else if (k == "prog_full") {
                f.config.prog_full_threshold = narrow<std::size_t>(u(), key, 1u << 24);
                f.prog_full_set = true;
            } else if (k == "prog_empty") f.config.prog_empty_threshold = narrow<std::size_t>(u(), key, 1u << 24);
            else if (k == "sync_latency") f.config.count_sync_latency = narrow<unsigned>(u(), key, 64);
            else unknown();
        } else if (sec == "route" && parts.size() == 2) {
            if (!routes_from_file_) {
                routes_.clear();
                routes_from_file_ = true;
            }
            if (parts[1] == "default") {
                if (value == "discard") {
                    s_.default_discard = true;
                    s_.default_fifo.clear();
                } else {
                    s_.default_discard = false;
                    s_.default_fifo = value;
                }
            } else {
                routes_[parse_uint(parts[1], line)] = parse_route(value, line);
            }
        } else if (key == "rx.discipline") {
            if (value == "space_count") s_.rx_discipline = RxDiscipline::SpaceCount;
            else if (value == "threshold") s_.rx_discipline = RxDiscipline::Threshold;
            else throw ParseError(line, "rx.discipline must be space_count or threshold");
        } else if (key == "scheduler.policy") {
            if (value == "strict") s_.policy = SchedulerPolicy::StrictPriority;
            else if (value == "round_robin") s_.policy = SchedulerPolicy::RoundRobin;
            else throw ParseError(line, "scheduler.policy must be strict or round_robin");
        } else if (key == "scheduler.priority") {
            s_.priority = split(value, ',');
        } else if (sec == "traffic" && parts.size() == 2) {
            auto& t = s_.traffic;
            const std::string& k = parts[1];
            if (k == "kind") {
                if (value == "write_stream") t.kind = TrafficKind::WriteStream;
                else if (value == "read_stream") t.kind = TrafficKind::ReadStream;
                else if (value == "mixed") t.kind = TrafficKind::Mixed;
                else if (value == "idle") t.kind = TrafficKind::Idle;
                else throw ParseError(line, "traffic.kind must be write_stream, read_stream, mixed or idle");
            } else if (k == "payload_bytes") t.payload_bytes = narrow<std::size_t>(u(), key, 1u << 20);
            else if (k == "count") t.count = u();
            else if (k == "gap_min") t.gap_min = narrow<unsigned>(u(), key, 1u << 20);
            else if (k == "gap_max") t.gap_max = narrow<unsigned>(u(), key, 1u << 20);
            else if (k == "throttle") t.throttle = parse_double(value, line);
            else if (k == "base_address") t.base_address = u();
            else if (k == "window_bytes") t.window_bytes = u();
            else if (k == "mix") t.mix = value;
            else if (k == "write_values") {
                t.write_values.clear();
                for (const auto& v : split(value, ','))
                    t.write_values.push_back(narrow<std::uint32_t>(parse_uint(v, line), key, 0xFFFFFFFFu));
            } else if (k == "digest") t.digest = parse_bool(value, line);
            else if (k == "requester_id") t.requester_id = narrow<std::uint16_t>(u(), key, 0xFFFF);
            else if (k == "read_length_dw") t.read_length_dw = narrow<std::uint16_t>(u(), key, 1024);
            else unknown();
        } else if (sec == "link" && parts.size() == 2) {
            auto& l = s_.link;
            const std::string& k = parts[1];
            if (k == "lanes") l.lanes = narrow<unsigned>(u(), key, 32);
            else if (k == "raw_gbps") l.raw_gbps_per_lane = parse_double(value, line);
            else if (k == "encoding") l.encoding_factor = parse_double(value, line);
            else if (k == "framing_bytes") l.per_tlp_framing_bytes = narrow<unsigned>(u(), key, 4096);
            else if (k == "dllp_overhead") l.dllp_overhead_fraction = parse_double(value, line);
            else unknown();
        } else if (sec == "endpoint" && parts.size() == 2) {
            const std::string& k = parts[1];
            if (k == "rx_fifo") s_.endpoint_rx = value;
            else if (k == "tx_fifo") s_.endpoint_tx = value;
            else if (k == "switches") s_.board.switches = narrow<std::uint8_t>(u(), key, 0xFF);
            else if (k == "completer_id") s_.board.completer_id = narrow<std::uint16_t>(u(), key, 0xFFFF);
            else unknown();
        } else if (key == "framing.mode") {
            if (value == "framed") s_.framing = FramingMode::Framed;
            else if (value == "length_prefixed") s_.framing = FramingMode::LengthPrefixed;
            else throw ParseError(line, "framing.mode must be framed or length_prefixed");
        } else if (sec == "fault" && parts.size() == 2) {
            faults_[parse_uint(parts[1], line)] = parse_fault(value, line);
        } else if (sec == "sim" && parts.size() == 2) {
            const std::string& k = parts[1];
            if (k == "end_ps") s_.end_ps = static_cast<TimePs>(u());
            else if (k == "seed") s_.seed = u();
            else if (k == "stop_on_drain") s_.stop_on_drain = parse_bool(value, line);
            else unknown();
        } else if (key == "trace.signals") {
            s_.trace_signals.clear();
            if (!value.empty())
                for (const auto& v : split(value, ',')) s_.trace_signals.push_back(v);
        } else {
            unknown();
        }
    }

    Scenario build() const {
        Scenario s = s_;
        s.routes.clear();
        for (const auto& [i, r] : routes_) s.routes.push_back(r);
        s.faults.clear();
        for (const auto& [i, f] : faults_) s.faults.push_back(f);
        for (auto& f : s.fifos)
            if (!f.prog_full_set) f.config.prog_full_threshold = f.config.depth_write_words;
        return s;
    }

private:
    FifoSpec& fifo(const std::string& name) {
        for (auto& f : s_.fifos)
            if (f.name == name) return f;
        FifoSpec f;
        f.name = name;
        s_.fifos.push_back(f);
        return s_.fifos.back();
    }

    Scenario s_;
    std::map<std::uint64_t, RouteSpec> routes_{{0, default_scenario().routes[0]}};
    std::map<std::uint64_t, FaultSpec> faults_;
    bool routes_from_file_ = false;
};

/// Checks every cross-reference and precondition; throws ValidationError
/// naming the offending key.
inline void validate(const Scenario& s) {
    if (s.effective_link_period() <= 0) throw ValidationError("clock.link.period_ps", "must be positive");
    if (s.user_period_ps <= 0) throw ValidationError("clock.user.period_ps", "must be positive");
    std::size_t n_rx = 0, n_tx = 0;
    for (const auto& f : s.fifos) {
        const std::string key = "fifo." + f.name;
        try {
            validate(f.config);
        } catch (const ConfigError& e) {
            throw ValidationError(key, e.what());
        }
        if (f.role == FifoRole::Rx) {
            ++n_rx;
            if (f.config.write_width_bits != 64) throw ValidationError(key + ".write_width", "RX FIFOs take 64-bit link words");
        } else {
            ++n_tx;
            if (f.config.read_width_bits != 64) throw ValidationError(key + ".read_width", "TX FIFOs feed the 64-bit link");
            if (!f.config.fwft) throw ValidationError(key + ".fwft", "the TX judge needs first-word fall-through");
        }
    }
    if (n_rx == 0) throw ValidationError("fifo", "at least one RX FIFO is required");
    if (n_tx == 0) throw ValidationError("fifo", "at least one TX FIFO is required");
    for (std::size_t i = 0; i < s.routes.size(); ++i) {
        const auto& r = s.routes[i];
        const std::string key = "route." + std::to_string(i);
        const auto* f = s.find_fifo(r.fifo);
        if (!f) throw ValidationError(key, "unknown FIFO '" + r.fifo + "'");
        if (f->role != FifoRole::Rx) throw ValidationError(key, "'" + r.fifo + "' is not an RX FIFO");
        if (r.addr_lo > r.addr_hi) throw ValidationError(key, "range is reversed");
    }
    if (!s.default_discard) {
        const auto* f = s.find_fifo(s.default_fifo);
        if (!f || f->role != FifoRole::Rx) throw ValidationError("route.default", "unknown RX FIFO '" + s.default_fifo + "'");
    }
    const auto* erx = s.find_fifo(s.endpoint_rx);
    if (!erx || erx->role != FifoRole::Rx) throw ValidationError("endpoint.rx_fifo", "unknown RX FIFO '" + s.endpoint_rx + "'");
    if (s.framing == FramingMode::Framed && !erx->config.fwft)
        throw ValidationError("endpoint.rx_fifo", "the endpoint's count-gated reader needs first-word fall-through");
    const auto* etx = s.find_fifo(s.endpoint_tx);
    if (!etx || etx->role != FifoRole::Tx) throw ValidationError("endpoint.tx_fifo", "unknown TX FIFO '" + s.endpoint_tx + "'");
    if (etx->config.depth_write_words < words_for(5, etx->config.write_lanes()))
        throw ValidationError("endpoint.tx_fifo", "too shallow for one completion");

    if (!s.priority.empty()) {
        std::vector<std::string> tx_names;
        for (const auto& f : s.fifos)
            if (f.role == FifoRole::Tx) tx_names.push_back(f.name);
        auto p = s.priority;
        std::sort(p.begin(), p.end());
        std::sort(tx_names.begin(), tx_names.end());
        if (p != tx_names) throw ValidationError("scheduler.priority", "must list every TX FIFO exactly once");
    }
    try {
        validate(s.traffic);
    } catch (const ConfigError& e) {
        throw ValidationError("traffic", e.what());
    }
    try {
        validate(s.link);
    } catch (const ConfigError& e) {
        throw ValidationError("link", e.what());
    }
    for (std::size_t i = 0; i < s.faults.size(); ++i) {
        const auto* f = s.find_fifo(s.faults[i].fifo);
        if (!f) throw ValidationError("fault." + std::to_string(i), "unknown FIFO '" + s.faults[i].fifo + "'");
    }
    if (s.end_ps <= 0) throw ValidationError("sim.end_ps", "must be positive");
}

/// Parses scenario text on top of the defaults and validates the result.
inline Scenario parse_scenario(std::string_view text, Scenario base = default_scenario()) {
    ScenarioBuilder b(std::move(base));
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string t = scenario_detail::trim(line);
        if (!t.empty()) {
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
            const std::string key = scenario_detail::trim(std::string_view(t).substr(0, eq));
            const std::string value = scenario_detail::trim(std::string_view(t).substr(eq + 1));
            if (key.empty()) throw ParseError(line_no, "missing key");
            b.set(key, value, line_no);
        }
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    Scenario s = b.build();
    validate(s);
    return s;
}

}  // namespace pwrap
