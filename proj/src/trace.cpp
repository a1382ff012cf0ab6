#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "omni/engine.hpp"
#include "omni/errors.hpp"

namespace omni {

namespace {

std::string_view mode_name(ModeKind m) {
    switch (m) {
        case ModeKind::Text: return "text";
        case ModeKind::ImageBlock: return "image";
        case ModeKind::Audio: return "audio";
        case ModeKind::Finished: return "finished";
    }
    return "?";
}

ModeKind mode_from_name(std::string_view s) {
    if (s == "text") return ModeKind::Text;
    if (s == "image") return ModeKind::ImageBlock;
    if (s == "audio") return ModeKind::Audio;
    if (s == "finished") return ModeKind::Finished;
    throw ConfigError("trace: unknown mode \"" + std::string(s) + "\"");
}

}  // namespace

void write_trace_jsonl(std::ostream& out, const Trace& trace) {
    for (const auto& ev : trace.events) {
        nlohmann::ordered_json line;
        line["step"] = ev.step;
        line["mode"] = mode_name(ev.mode);
        line["event"] = to_string(ev.kind);
        line["token"] = ev.token;
        line["inspected"] = ev.inspected;
        if (ev.kind == EventKind::AudioSegmentComplete) line["raw_tokens"] = ev.raw_tokens;
        out << line.dump() << '\n';
    }
    nlohmann::ordered_json summary;
    summary["steps"] = trace.counters.steps;
    summary["inspections"] = trace.counters.inspections;
    summary["blocks"] = trace.counters.blocks;
    summary["rng_draws"] = trace.counters.rng_draws;
    out << nlohmann::ordered_json{{"summary", summary}}.dump() << '\n';
}

std::string trace_to_jsonl(const Trace& trace) {
    std::ostringstream ss;
    write_trace_jsonl(ss, trace);
    return ss.str();
}

Trace read_trace_jsonl(std::istream& in) {
    Trace trace;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.contains("summary")) {
                const auto& s = j.at("summary");
                trace.counters = {s.at("steps").get<std::uint64_t>(), s.at("inspections").get<std::uint64_t>(),
                                  s.at("blocks").get<std::uint64_t>(), s.at("rng_draws").get<std::uint64_t>()};
                continue;
            }
            GenEvent ev;
            ev.step = j.at("step").get<std::size_t>();
            ev.mode = mode_from_name(j.at("mode").get<std::string>());
            const auto kind = event_kind_from_string(j.at("event").get<std::string>());
            if (!kind) throw ConfigError("unknown event \"" + j.at("event").get<std::string>() + "\"");
            ev.kind = *kind;
            ev.token = j.at("token").is_null() ? 0 : j.at("token").get<TokenId>();
            ev.inspected = j.at("inspected").get<bool>();
            if (j.contains("raw_tokens")) ev.raw_tokens = j.at("raw_tokens").get<std::vector<TokenId>>();
            trace.events.push_back(std::move(ev));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return trace;
}

}  // namespace omni
