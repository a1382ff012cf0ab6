#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "omni/audio_bpe.hpp"
#include "omni/backend.hpp"
#include "omni/engine.hpp"
#include "omni/errors.hpp"
#include "omni/genbridge.hpp"
#include "omni/json_io.hpp"
#include "omni/moe.hpp"

namespace omni::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Thrown for anything the user can fix by changing inputs or flags.
class UsageError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

std::uint64_t effective_seed(std::uint64_t flag_seed) {
    const char* env = std::getenv("OMNI_DECODE_SEED");
    if (env == nullptr || *env == '\0') return flag_seed;
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw UsageError(std::string("OMNI_DECODE_SEED is not an integer: ") + env);
    return v;
}

// A JSON value that is either inline or a path to a JSON file.
nlohmann::json inline_or_file(const nlohmann::json& ref, const fs::path& base_dir, fs::path* resolved_dir) {
    if (!ref.is_string()) {
        if (resolved_dir) *resolved_dir = base_dir;
        return ref;
    }
    fs::path p = ref.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (resolved_dir) *resolved_dir = p.parent_path();
    return read_json_file(p);
}

SamplingParams sampling_from_json(const nlohmann::json& j) {
    SamplingParams s;
    s.temperature = json_get_or<double>(j, "temperature", 1.0);
    if (j.contains("top_k") && !j.at("top_k").is_null()) s.top_k = json_get<std::size_t>(j, "top_k");
    s.top_p = json_get_or<double>(j, "top_p", 1.0);
    s.greedy = json_get_or<bool>(j, "greedy", false);
    return s;
}

// Config schema:
// {"partition": <path|object>?, "block_size", "max_tokens", "policy", "sampling": {...},
//  "seed", "max_audio_tokens", "bpe_merges": <path>?, "conditioning": <string>?}
SessionConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir,
                               std::shared_ptr<const VocabPartition> fallback_partition) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    SessionConfig c;
    if (j.contains("partition")) {
        c.partition = std::make_shared<const VocabPartition>(resolve_partition(j.at("partition"), base_dir));
    } else {
        c.partition = std::move(fallback_partition);
    }
    if (!c.partition) throw ConfigError("config has no partition and the backend supplies none");
    c.block_size = json_get_or<std::size_t>(j, "block_size", kDefaultBlockSize);
    c.max_tokens = json_get_or<std::size_t>(j, "max_tokens", 4096);
    const auto policy = json_get_or<std::string>(j, "policy", "free_interleave");
    const auto parsed = generation_policy_from_string(policy);
    if (!parsed) throw ConfigError("unknown policy \"" + policy + "\"");
    c.policy = *parsed;
    if (j.contains("sampling")) c.sampling = sampling_from_json(j.at("sampling"));
    c.seed = json_get_or<std::uint64_t>(j, "seed", 0);
    c.max_audio_tokens = json_get_or<std::size_t>(j, "max_audio_tokens", kDefaultMaxAudioTokens);
    c.conditioning = json_get_or<std::string>(j, "conditioning", "");
    if (j.contains("bpe_merges")) {
        fs::path p = json_get<std::string>(j, "bpe_merges");
        if (p.is_relative()) p = base_dir / p;
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open " + p.string());
        c.audio_codec = std::make_shared<const BpeCodec>(read_merges(in));
    }
    try {
        c.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

std::vector<TokenId> prompt_from_json(const nlohmann::json& j) {
    const auto& arr = j.is_object() ? j.at("tokens") : j;
    try {
        return arr.get<std::vector<TokenId>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("prompt must be an array of token ids: ") + e.what());
    }
}

struct RunInputs {
    BackendScenario backend;
    SessionConfig config;
    std::vector<TokenId> prompt;
};

RunInputs load_run_inputs(const nlohmann::json& config_ref, const nlohmann::json& backend_ref,
                          const nlohmann::json& prompt_ref, const fs::path& base_dir) {
    RunInputs in;
    fs::path dir;
    const auto backend_json = inline_or_file(backend_ref, base_dir, &dir);
    in.backend = backend_from_json(backend_json, dir);
    const auto config_json = inline_or_file(config_ref, base_dir, &dir);
    in.config = config_from_json(config_json, dir, in.backend.partition);
    if (in.config.partition->total_size() != in.backend.backend->vocab_size()) {
        throw ConfigError("config partition and backend disagree on vocabulary size");
    }
    in.prompt = prompt_from_json(inline_or_file(prompt_ref, base_dir, nullptr));
    return in;
}

Session open_checked(const RunInputs& in, std::uint64_t seed) {
    auto cfg = in.config;
    cfg.seed = seed;
    try {
        return open_session(std::move(cfg), *in.backend.backend, in.prompt);
    } catch (const InvalidPromptError& e) {
        throw ConfigError(std::string("prompt: ") + e.what());
    }
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path);
    f << text;
    if (!f) throw Error("failed writing " + path);
}

// ---- run -------------------------------------------------------------------

struct RunArgs {
    std::string config, backend, prompt, mode = "streaming", out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
    auto in = load_run_inputs(nlohmann::json(a.config), nlohmann::json(a.backend), nlohmann::json(a.prompt), {});
    const auto seed = effective_seed(a.seed_set ? a.seed : in.config.seed);
    auto session = open_checked(in, seed);
    const Trace trace = a.mode == "fused" ? run_fused(session) : run_streaming(session);
    write_output(a.out, trace_to_jsonl(trace), out);
    return kOk;
}

// ---- bench -----------------------------------------------------------------

// Runs fn(i) for i in [0, n) across worker threads.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    const std::lock_guard lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

ojson path_summary(const std::vector<Trace>& traces) {
    TraceCounters total;
    for (const auto& t : traces) {
        total.steps += t.counters.steps;
        total.inspections += t.counters.inspections;
        total.blocks += t.counters.blocks;
        total.rng_draws += t.counters.rng_draws;
    }
    ojson j;
    j["tokens_generated"] = total.steps;
    j["steps"] = total.steps;
    j["inspections"] = total.inspections;
    j["blocks"] = total.blocks;
    j["rng_draws"] = total.rng_draws;
    return j;
}

ojson path_timing(double ms, std::uint64_t tokens) {
    ojson j;
    j["wall_time_ms"] = ms;
    j["tokens_per_sec"] = ms > 0.0 ? static_cast<double>(tokens) / (ms / 1000.0) : 0.0;
    return j;
}

struct BenchArgs {
    std::string scenario, out;
    long long sessions = 1;
    std::uint64_t seed = 0;
};

// Scenario schema: {"config": <path|object>, "backend": <path|object>, "prompt": <path|array>}.
int cmd_bench(const BenchArgs& a, std::ostream& out) {
    if (a.sessions < 1) throw UsageError("--sessions must be >= 1");
    const fs::path scenario_path = a.scenario;
    const auto sj = read_json_file(scenario_path);
    if (!sj.is_object()) throw ConfigError("bench scenario must be a JSON object");
    const auto in = load_run_inputs(sj.at("config"), sj.at("backend"), sj.at("prompt"), scenario_path.parent_path());
    const auto base_seed = effective_seed(a.seed);
    const auto n = static_cast<std::size_t>(a.sessions);

    std::vector<Trace> streaming(n), fused(n);
    using Clock = std::chrono::steady_clock;
    auto timed = [&](std::vector<Trace>& sink, bool use_fused) {
        const auto t0 = Clock::now();
        parallel_for(n, [&](std::size_t i) {
            auto s = open_checked(in, base_seed + i);
            sink[i] = use_fused ? run_fused(s) : run_streaming(s);
        });
        return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    };
    const double streaming_ms = timed(streaming, false);
    const double fused_ms = timed(fused, true);

    std::size_t divergent = 0;
    auto per_session = ojson::array();
    for (std::size_t i = 0; i < n; ++i) {
        const bool same = streaming[i].tokens() == fused[i].tokens();
        divergent += same ? 0 : 1;
        ojson s;
        s["index"] = i;
        s["seed"] = base_seed + i;
        s["tokens_equal"] = same;
        s["streaming"] = path_summary({streaming[i]});
        s["fused"] = path_summary({fused[i]});
        per_session.push_back(s);
    }

    ojson summary;
    summary["sessions"] = n;
    summary["seed"] = base_seed;
    summary["block_size"] = in.config.block_size;
    summary["policy"] = std::string(to_string(in.config.policy));
    summary["streaming"] = path_summary(streaming);
    summary["fused"] = path_summary(fused);
    summary["inspection_deficit"] = summary["streaming"]["inspections"].get<std::uint64_t>() -
                                    summary["fused"]["inspections"].get<std::uint64_t>();
    summary["tokens_equal"] = divergent == 0;
    summary["per_session"] = per_session;

    ojson report;
    report["summary"] = summary;
    report["timing"]["streaming"] = path_timing(streaming_ms, summary["streaming"]["tokens_generated"]);
    report["timing"]["fused"] = path_timing(fused_ms, summary["fused"]["tokens_generated"]);
    write_output(a.out, report.dump(2) + "\n", out);
    return divergent == 0 ? kOk : kDivergence;
}

// ---- bpe -------------------------------------------------------------------

std::vector<SymbolSequence> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return read_corpus(in);
}

BpeCodec load_codec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return read_merges(in);
}

std::string corpus_text(const std::vector<SymbolSequence>& corpus) {
    std::ostringstream s;
    write_corpus(s, corpus);
    return s.str();
}

struct BpeArgs {
    std::string corpus, merges, input, out;
    std::size_t base = 0, budget = 0, min_freq = 2;
    double frame_rate = kDefaultAudioFrameRateHz;
};

int cmd_bpe_train(const BpeArgs& a, std::ostream& out) {
    BpeTrainOptions opts;
    opts.min_pair_frequency = a.min_freq;
    const auto codec = train_bpe(load_corpus(a.corpus), a.base, a.budget, opts);
    std::ostringstream s;
    write_merges(s, codec);
    write_output(a.out, s.str(), out);
    return kOk;
}

int cmd_bpe_apply(const BpeArgs& a, bool encode, std::ostream& out) {
    const auto codec = load_codec(a.merges);
    auto corpus = load_corpus(a.input);
    for (auto& seq : corpus) seq = encode ? codec.encode(seq) : codec.decode(seq);
    write_output(a.out, corpus_text(corpus), out);
    return kOk;
}

int cmd_bpe_stats(const BpeArgs& a, std::ostream& out) {
    const auto stats = compute_stats(load_codec(a.merges), load_corpus(a.input), a.frame_rate);
    write_output(a.out, to_json(stats).dump() + "\n", out);
    return kOk;
}

// ---- trace-diff ------------------------------------------------------------

Trace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return read_trace_jsonl(in);
}

int cmd_trace_diff(const std::string& a, const std::string& b, std::ostream& out) {
    const auto ta = load_trace(a), tb = load_trace(b);
    const auto n = std::min(ta.events.size(), tb.events.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ea = ta.events[i];
        const auto& eb = tb.events[i];
        if (ea.token != eb.token || ea.kind != eb.kind) {
            out << "first divergence at step " << ea.step << ": " << to_string(ea.kind) << " " << ea.token << " vs "
                << to_string(eb.kind) << " " << eb.token << "\n";
            return kDivergence;
        }
    }
    if (ta.events.size() != tb.events.size()) {
        out << "first divergence at step " << n + 1 << ": trace lengths " << ta.events.size() << " vs "
            << tb.events.size() << "\n";
        return kDivergence;
    }
    out << "identical: " << n << " steps\n";
    return kOk;
}

// ---- moe -------------------------------------------------------------------

struct MoeArgs {
    std::size_t tokens = 1000, d = 8, experts = 4, top_k = 2, inner = 16;
    std::uint64_t seed = 0;
    std::string load, save, out;
};

int cmd_moe(const MoeArgs& a, std::ostream& out) {
    const auto seed = effective_seed(a.seed);
    MoeParams params;
    if (!a.load.empty()) {
        params = moe_params_from_json(read_json_file(a.load));
    } else {
        try {
            params = MoeParams::random({a.d, a.experts, a.top_k, a.inner}, seed);
        } catch (const PreconditionError& e) {
            throw UsageError(e.what());
        }
    }
    if (!a.save.empty()) write_output(a.save, to_json(params).dump(2) + "\n", out);

    const MoeLayer layer(std::move(params));
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> x(layer.shape().d);
    for (std::size_t i = 0; i < a.tokens; ++i) {
        for (auto& v : x) v = noise(rng);
        layer.forward(x, static_cast<Modality>(i % kRoutedModalities));
    }
    ojson report;
    report["summary"]["tokens"] = a.tokens;
    report["summary"]["seed"] = seed;
    report["summary"]["load"] = to_json(layer.load_report());
    write_output(a.out, report.dump(2) + "\n", out);
    return kOk;
}

// ---- layout ----------------------------------------------------------------

int cmd_layout(const std::string& path, const std::string& out_path, std::ostream& out) {
    MultiScaleLayout layout = [&] {
        try {
            return layout_from_json(read_json_file(path));
        } catch (const PreconditionError& e) {
            throw ConfigError(e.what());
        }
    }();
    std::ostringstream s;
    for (const auto& e : emit_sequence(layout)) s << to_json(e).dump() << "\n";
    ojson summary;
    summary["summary"]["scales"] = layout.scale_count();
    summary["summary"]["total_len"] = layout.total_len();
    summary["summary"]["total_slots"] = layout.total_slots();
    s << summary.dump() << "\n";
    write_output(out_path, s.str(), out);
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mixed-modal decoding runtime harness", "omni-decode"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Decode one session and write its JSONL trace");
    run_cmd->add_option("config", run_args.config, "Session config JSON")->required();
    run_cmd->add_option("backend", run_args.backend, "Backend scenario JSON")->required();
    run_cmd->add_option("prompt", run_args.prompt, "Prompt token ids JSON")->required();
    run_cmd->add_option("--mode", run_args.mode, "Decoding path")->check(CLI::IsMember({"streaming", "fused"}));
    run_cmd->add_option("--out", run_args.out, "Trace output path (default stdout)");
    auto* run_seed = run_cmd->add_option("--seed", run_args.seed, "RNG seed (overrides config)");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "Run sessions on both paths and compare counters");
    bench_cmd->add_option("scenario", bench_args.scenario, "Bench scenario JSON")->required();
    bench_cmd->add_option("--sessions", bench_args.sessions, "Number of sessions");
    bench_cmd->add_option("--seed", bench_args.seed, "Base seed; session i uses seed + i");
    bench_cmd->add_option("--out", bench_args.out, "Report path (default stdout)");

    BpeArgs bpe_args;
    auto* bpe_cmd = app.add_subcommand("bpe", "Audio token BPE codec");
    bpe_cmd->require_subcommand(1);
    auto* bpe_train = bpe_cmd->add_subcommand("train", "Learn merges from a corpus");
    bpe_train->add_option("corpus", bpe_args.corpus, "Corpus, one sequence per line")->required();
    bpe_train->add_option("--base", bpe_args.base, "Raw audio alphabet size")->required();
    bpe_train->add_option("--budget", bpe_args.budget, "Target vocabulary size")->required();
    bpe_train->add_option("--min-freq", bpe_args.min_freq, "Minimum pair count to merge");
    bpe_train->add_option("--out", bpe_args.out, "Merges output path");
    CLI::App* bpe_apply[2];
    for (int i = 0; i < 2; ++i) {
        bpe_apply[i] = bpe_cmd->add_subcommand(i == 0 ? "encode" : "decode", i == 0 ? "Encode a corpus" : "Decode a corpus");
        bpe_apply[i]->add_option("merges", bpe_args.merges, "Merges file")->required();
        bpe_apply[i]->add_option("input", bpe_args.input, "Input corpus")->required();
        bpe_apply[i]->add_option("--out", bpe_args.out, "Output path");
    }
    auto* bpe_stats = bpe_cmd->add_subcommand("stats", "Compression statistics as JSON");
    bpe_stats->add_option("merges", bpe_args.merges, "Merges file")->required();
    bpe_stats->add_option("input", bpe_args.input, "Raw corpus")->required();
    bpe_stats->add_option("--frame-rate", bpe_args.frame_rate, "Raw token rate in Hz")->check(CLI::PositiveNumber);
    bpe_stats->add_option("--out", bpe_args.out, "Output path");

    std::string diff_a, diff_b;
    auto* diff_cmd = app.add_subcommand("trace-diff", "Compare the token streams of two traces");
    diff_cmd->add_option("a", diff_a, "First trace")->required();
    diff_cmd->add_option("b", diff_b, "Second trace")->required();

    MoeArgs moe_args;
    auto* moe_cmd = app.add_subcommand("moe", "Route random tokens through the MoE layer and report load");
    moe_cmd->add_option("--tokens", moe_args.tokens, "Tokens to route (modalities cycle)");
    moe_cmd->add_option("--seed", moe_args.seed, "Seed for weights and inputs");
    moe_cmd->add_option("--d", moe_args.d, "Hidden dimension");
    moe_cmd->add_option("--experts", moe_args.experts, "Expert count");
    moe_cmd->add_option("--top-k", moe_args.top_k, "Experts per token");
    moe_cmd->add_option("--inner", moe_args.inner, "Expert inner width");
    moe_cmd->add_option("--load", moe_args.load, "Checkpoint to load");
    moe_cmd->add_option("--save", moe_args.save, "Write the checkpoint here");
    moe_cmd->add_option("--out", moe_args.out, "Report path");

    std::string layout_path, layout_out;
    auto* layout_cmd = app.add_subcommand("layout", "Emit the multi-scale query sequence as JSONL");
    layout_cmd->add_option("layout", layout_path, "Layout JSON {\"d\", \"scales\"}")->required();
    layout_cmd->add_option("--out", layout_out, "Output path");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    run_args.seed_set = run_seed->count() > 0;

    try {
        if (*run_cmd) return cmd_run(run_args, out);
        if (*bench_cmd) return cmd_bench(bench_args, out);
        if (*bpe_train) return cmd_bpe_train(bpe_args, out);
        if (*bpe_apply[0]) return cmd_bpe_apply(bpe_args, true, out);
        if (*bpe_apply[1]) return cmd_bpe_apply(bpe_args, false, out);
        if (*bpe_stats) return cmd_bpe_stats(bpe_args, out);
        if (*diff_cmd) return cmd_trace_diff(diff_a, diff_b, out);
        if (*moe_cmd) return cmd_moe(moe_args, out);
        if (*layout_cmd) return cmd_layout(layout_path, layout_out, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed input: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace omni::cli
