#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pwrap/scenario.hpp"
#include "pwrap/simulation.hpp"
#include "pwrap/vcd.hpp"

namespace {

using namespace pwrap;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

Scenario with_setting(const Scenario& base, const std::string& key, const std::string& value) {
    ScenarioBuilder b(base);
    b.set(key, value, 0);
    Scenario s = b.build();
    validate(s);
    return s;
}

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

int cmd_run(const std::string& path, const std::string& vcd, const std::string& stats_path, std::optional<std::uint64_t> seed) {
    Scenario s = parse_scenario(read_file(path));
    if (seed) s.seed = *seed;
    RunOptions opt;
    opt.trace = !vcd.empty() && s.trace_signals.empty();
    const RunResult r = run(s, opt);
    const SimStats& st = r.stats;

    std::cout << "measured_gbps " << fixed(st.measured_gbps, 4) << '\n';
    std::cout << "analytic_gbps " << fixed(st.analytic_gbps, 4) << '\n';
    std::cout << "simulated_ps " << st.simulated_time_ps << (st.drained ? " (drained)" : "") << '\n';
    std::cout << "rx packets offered " << st.rx.offered << " delivered " << st.rx.delivered << " discarded "
              << st.rx.discarded << " corrupted " << st.rx.corrupted << '\n';
    if (st.reads_issued > 0)
        std::cout << "reads issued " << st.reads_issued << " completions matched " << st.completions_matched << '\n';
    if (!st.led_history.empty() && st.led_history.size() <= 64) {
        std::cout << "leds";
        for (auto v : st.led_history) {
            char buf[8];
            std::snprintf(buf, sizeof buf, " 0x%02X", v);
            std::cout << buf;
        }
        std::cout << '\n';
    }

    const std::string json = to_json(st).dump(2) + "\n";
    if (stats_path.empty()) std::cout << json;
    else write_file(stats_path, json);
    if (!vcd.empty()) write_file(vcd, emit_vcd(r.traces, r.trace_selection));
    return 0;
}

struct Range {
    std::int64_t lo, hi, step;
};

Range parse_range(const std::string& text) {
    // LO..HI:STEP
    const auto dots = text.find("..");
    const auto colon = text.find(':');
    if (dots == std::string::npos) throw ConfigError("range must be LO..HI[:STEP]");
    Range r{};
    try {
        r.lo = std::stoll(text.substr(0, dots), nullptr, 0);
        r.hi = std::stoll(text.substr(dots + 2, colon == std::string::npos ? std::string::npos : colon - dots - 2), nullptr, 0);
        r.step = colon == std::string::npos ? 1 : std::stoll(text.substr(colon + 1), nullptr, 0);
    } catch (const std::exception&) {
        throw ConfigError("bad range '" + text + "'");
    }
    if (r.step <= 0 || r.lo > r.hi) throw ConfigError("range needs LO <= HI and a positive step");
    return r;
}

int cmd_sweep(const std::string& path, const std::string& param, const std::string& range_text, const std::string& out,
              unsigned jobs) {
    const Scenario base = parse_scenario(read_file(path));
    const Range range = parse_range(range_text);
    std::vector<std::int64_t> values;
    for (std::int64_t v = range.lo; v <= range.hi; v += range.step) values.push_back(v);
    std::vector<Scenario> points;
    for (auto v : values) points.push_back(with_setting(base, param, std::to_string(v)));

    // Each point is independent; rows are assembled in swept order afterwards.
    std::vector<SimStats> results(points.size());
    jobs = std::max(1u, jobs);
    for (std::size_t start = 0; start < points.size(); start += jobs) {
        std::vector<std::future<SimStats>> batch;
        for (std::size_t i = start; i < std::min(points.size(), start + jobs); ++i)
            batch.push_back(std::async(std::launch::async, [&points, i] { return run(points[i]).stats; }));
        for (std::size_t k = 0; k < batch.size(); ++k) results[start + k] = batch[k].get();
    }

    std::ostringstream csv;
    csv << param << ",measured_gbps,analytic_gbps,max_occupancy,stall_edges\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        const SimStats& st = results[i];
        std::size_t max_occ = 0;
        for (const auto& f : st.fifos) max_occ = std::max(max_occ, f.max_occupancy);
        csv << values[i] << ',' << fixed(st.measured_gbps) << ',' << fixed(st.analytic_gbps) << ',' << max_occ << ','
            << st.rx_throttle_edges + st.tx_link_stall_edges << '\n';
    }
    write_file(out, csv.str());
    return 0;
}

/// Offered packets that show up, in order, among the received ones.
std::size_t intact_count(const std::vector<std::vector<std::uint32_t>>& offered,
                         const std::vector<std::vector<std::uint32_t>>& received) {
    std::size_t n = 0, j = 0;
    for (const auto& p : received) {
        auto k = j;
        while (k < offered.size() && offered[k] != p) ++k;
        if (k == offered.size()) continue;
        ++n;
        j = k + 1;
    }
    return n;
}

int cmd_inject(const std::string& path, TimePs time, const std::string& fifo, const std::string& slot,
               const std::string& mask, std::optional<std::uint64_t> seed) {
    Scenario base = parse_scenario(read_file(path));
    if (seed) base.seed = *seed;
    base.faults.clear();
    ScenarioBuilder b(base);
    b.set("fault.0", std::to_string(time) + " " + fifo + " " + slot + " " + mask, 0);
    b.set("traffic.digest", "true", 0);
    Scenario framed = b.build();
    framed.framing = FramingMode::Framed;
    Scenario bare = framed;
    bare.framing = FramingMode::LengthPrefixed;

    std::cout << "mode,offered,intact,lost,flagged\n";
    for (const Scenario* s : {&framed, &bare}) {
        validate(*s);
        RunOptions opt;
        opt.record_packets = true;
        const RunResult r = run(*s, opt);
        const std::size_t intact = intact_count(r.offered, r.received);
        std::cout << to_string(s->framing) << ',' << r.offered.size() << ',' << intact << ','
                  << r.offered.size() - intact << ',' << r.stats.rx.corrupted << '\n';
    }
    return 0;
}

void report_error(const Error& e) {
    nlohmann::ordered_json j;
    j["error"] = e.kind();
    j["message"] = e.what();
    if (const auto* p = dynamic_cast<const ParseError*>(&e)) j["line"] = p->line();
    if (const auto* v = dynamic_cast<const ValidationError*>(&e)) j["key"] = v->key();
    std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Packet wrapper simulator"};
    app.require_subcommand(1);

    std::string scenario, vcd, stats, param, range, out = "-", fifo, slot, mask;
    std::optional<std::uint64_t> seed;
    std::int64_t time = 0;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

    auto* run_cmd = app.add_subcommand("run", "Run one scenario");
    run_cmd->add_option("scenario", scenario, "Scenario file")->required();
    run_cmd->add_option("--vcd", vcd, "Write a waveform dump");
    run_cmd->add_option("--stats", stats, "Write stats JSON here instead of stdout");
    run_cmd->add_option("--seed", seed, "Override sim.seed");

    auto* sweep_cmd = app.add_subcommand("sweep", "Vary one scenario key over a range");
    sweep_cmd->add_option("scenario", scenario, "Scenario file")->required();
    sweep_cmd->add_option("--param", param, "Scenario key, e.g. traffic.payload_bytes or fifo.rx0.depth")->required();
    sweep_cmd->add_option("--range", range, "LO..HI:STEP")->required();
    sweep_cmd->add_option("--out", out, "CSV path, - for stdout");
    sweep_cmd->add_option("--jobs", jobs, "Points simulated at once");

    auto* inject_cmd = app.add_subcommand("inject", "Corrupt one stored word, framed vs length-prefixed");
    inject_cmd->add_option("scenario", scenario, "Scenario file")->required();
    inject_cmd->add_option("--time", time, "Injection time in ps")->required();
    inject_cmd->add_option("--fifo", fifo, "FIFO name")->required();
    inject_cmd->add_option("--slot", slot, "Slot index, or hdrK for the K-th stored header")->required();
    inject_cmd->add_option("--mask", mask, "XOR mask")->required();
    inject_cmd->add_option("--seed", seed, "Override sim.seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) return cmd_run(scenario, vcd, stats, seed);
        if (*sweep_cmd) {
            // Accept bare keys like payload_bytes for the traffic section.
            if (param.find('.') == std::string::npos) param = "traffic." + param;
            return cmd_sweep(scenario, param, range, out, jobs);
        }
        if (*inject_cmd) return cmd_inject(scenario, time, fifo, slot, mask, seed);
    } catch (const ConfigError& e) {
        report_error(e);
        return 2;
    } catch (const Error& e) {
        report_error(e);
        return 1;
    }
    return 0;
}
