#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pwrap/sim_kernel.hpp"

namespace pwrap {

/// Short identifier for the n-th variable: base-94 over the printable range
/// starting at '!'.
inline std::string vcd_identifier(std::size_t n) {
    std::string id;
    do {
        id.push_back(static_cast<char>('!' + n % 94));
        n /= 94;
    } while (n > 0);
    return id;
}

inline std::string vcd_binary(std::uint64_t v, unsigned width) {
    std::string s;
    for (int b = static_cast<int>(width) - 1; b >= 0; --b) s.push_back(((v >> b) & 1u) ? '1' : '0');
    const auto first = s.find('1');
    return first == std::string::npos ? "0" : s.substr(first);
}

/// Renders the selected signals as a Value Change Dump with a 1 ps timescale.
/// Dotted names become nested scopes ("fifo.rx0.wr_count" is variable
/// "wr_count" in scope fifo/rx0). Unknown names in `selection` are ignored.
inline std::string emit_vcd(const Traces& traces, const std::vector<std::string>& selection) {
    const std::set<std::string> wanted(selection.begin(), selection.end());
    std::vector<TraceSignal> sigs;
    for (const auto& s : traces.signals)
        if (wanted.count(s.name)) sigs.push_back(s);

    std::map<std::string, std::string> ids;
    std::map<std::string, unsigned> widths;
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        ids[sigs[i].name] = vcd_identifier(i);
        widths[sigs[i].name] = sigs[i].width;
    }

    std::ostringstream out;
    out << "$date\n    pwrap simulation\n$end\n";
    out << "$version\n    pwrap\n$end\n";
    out << "$timescale 1ps $end\n";

    // Signals are sorted by name, so members of a scope are contiguous.
    std::vector<std::string> open;
    auto split = [](const std::string& name) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (std::size_t dot; (dot = name.find('.', start)) != std::string::npos; start = dot + 1)
            parts.push_back(name.substr(start, dot - start));
        parts.push_back(name.substr(start));
        return parts;
    };
    for (const auto& s : sigs) {
        auto parts = split(s.name);
        const std::string leaf = parts.back();
        parts.pop_back();
        std::size_t common = 0;
        while (common < open.size() && common < parts.size() && open[common] == parts[common]) ++common;
        while (open.size() > common) {
            out << "$upscope $end\n";
            open.pop_back();
        }
        for (std::size_t k = common; k < parts.size(); ++k) {
            out << "$scope module " << parts[k] << " $end\n";
            open.push_back(parts[k]);
        }
        out << "$var wire " << s.width << ' ' << ids[s.name] << ' ' << leaf << " $end\n";
    }
    while (!open.empty()) {
        out << "$upscope $end\n";
        open.pop_back();
    }
    out << "$enddefinitions $end\n";

    TimePs last = -1;
    for (const auto& e : traces.events) {
        const auto it = ids.find(e.signal);
        if (it == ids.end()) continue;
        if (e.time_ps != last) {
            out << '#' << e.time_ps << '\n';
            last = e.time_ps;
        }
        const unsigned w = widths[e.signal];
        if (w == 1)
            out << (e.value & 1u) << it->second << '\n';
        else
            out << 'b' << vcd_binary(e.value, w) << ' ' << it->second << '\n';
    }
    return out.str();
}

}  // namespace pwrap
