#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "omni/engine.hpp"
#include "omni/json_io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = OMNI_SCENARIO_DIR;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = omni::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
    const auto dir = fs::temp_directory_path() / ("omni_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir;
}

std::string scenario(const char* name) { return (kScenarios / name).string(); }

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::vector<std::string> token_fields(const std::string& jsonl) {
    std::vector<std::string> tokens;
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.contains("token")) tokens.push_back(j["token"].dump());
    }
    return tokens;
}

}  // namespace

TEST_CASE("run writes a trace with a summary line") {
    const auto out = scratch_dir() / "run.jsonl";
    const auto r = invoke({"run", scenario("config.json"), scenario("backend.json"), scenario("prompt.json"), "--out",
                           out.string()});
    REQUIRE(r.code == 0);
    const auto text = omni::read_text_file(out);
    const auto last = text.substr(text.rfind("{\"summary\""));
    const auto summary = nlohmann::json::parse(last)["summary"];
    CHECK(summary.contains("steps"));
    CHECK(summary.contains("rng_draws"));
    std::istringstream in(text);
    const auto trace = omni::read_trace_jsonl(in);
    CHECK(trace.events.back().kind == omni::EventKind::Eos);
}

TEST_CASE("streaming and fused runs emit the same tokens") {
    const auto dir = scratch_dir();
    for (const char* seed : {"1", "2", "3", "4"}) {
        const auto s = invoke({"run", scenario("config.json"), scenario("backend.json"), scenario("prompt.json"),
                               "--mode", "streaming", "--seed", seed});
        const auto f = invoke({"run", scenario("config.json"), scenario("backend.json"), scenario("prompt.json"),
                               "--mode", "fused", "--seed", seed});
        REQUIRE(s.code == 0);
        REQUIRE(f.code == 0);
        CHECK(token_fields(s.out) == token_fields(f.out));
        write_file(dir / "s.jsonl", s.out);
        write_file(dir / "f.jsonl", f.out);
        CHECK(invoke({"trace-diff", (dir / "s.jsonl").string(), (dir / "f.jsonl").string()}).code == 0);
    }
}

TEST_CASE("seed override from the environment") {
    const std::vector<std::string> args = {"run", scenario("config.json"), scenario("backend.json"),
                                           scenario("prompt.json"), "--seed", "11"};
    const auto base = invoke(args);
    ::setenv("OMNI_DECODE_SEED", "11", 1);
    const auto same = invoke({"run", scenario("config.json"), scenario("backend.json"), scenario("prompt.json"),
                              "--seed", "999"});
    ::setenv("OMNI_DECODE_SEED", "abc", 1);
    const auto bad = invoke(args);
    ::unsetenv("OMNI_DECODE_SEED");
    CHECK(base.out == same.out);
    CHECK(bad.code == 2);
}

TEST_CASE("run error exits") {
    const auto dir = scratch_dir();
    write_file(dir / "broken.json", "{\"block_size\": ");
    CHECK(invoke({"run", (dir / "broken.json").string(), scenario("backend.json"), scenario("prompt.json")}).code == 2);
    CHECK(invoke({"run", (dir / "missing.json").string(), scenario("backend.json"), scenario("prompt.json")}).code == 2);
    write_file(dir / "zero_block.json", R"({"block_size": 0})");
    CHECK(invoke({"run", (dir / "zero_block.json").string(), scenario("backend.json"), scenario("prompt.json")}).code ==
          2);
    write_file(dir / "bad_prompt.json", "[768, 770, 256]");
    CHECK(invoke({"run", scenario("config.json"), scenario("backend.json"), (dir / "bad_prompt.json").string()}).code ==
          2);
    CHECK(invoke({"run", scenario("config.json")}).code == 2);
    CHECK(invoke({"run", scenario("config.json"), scenario("backend.json"), scenario("prompt.json"), "--mode", "turbo"})
              .code == 2);
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("bench reports contractual counters") {
    const auto r = invoke({"bench", scenario("bench.json"), "--sessions", "4", "--seed", "5"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    const auto& s = j["summary"];
    CHECK(s["sessions"] == 4);
    CHECK(s["tokens_equal"] == true);
    const auto blocks = s["streaming"]["blocks"].get<std::uint64_t>();
    CHECK(s["fused"]["blocks"] == blocks);
    CHECK(s["inspection_deficit"].get<std::uint64_t>() == blocks * 16);
    CHECK(s["streaming"]["rng_draws"] == s["fused"]["rng_draws"]);
    CHECK(j["timing"]["streaming"].contains("wall_time_ms"));
    CHECK(j["timing"]["fused"].contains("tokens_per_sec"));
    REQUIRE(s["per_session"].size() == 4);
    CHECK(s["per_session"][2]["seed"] == 7);

    const auto again = nlohmann::json::parse(invoke({"bench", scenario("bench.json"), "--sessions", "4", "--seed", "5"}).out);
    CHECK(again["summary"] == s);
}

TEST_CASE("bench without image blocks has equal inspections") {
    const auto r = invoke({"bench", scenario("bench_text_only.json"), "--sessions", "1"});
    REQUIRE(r.code == 0);
    const auto s = nlohmann::json::parse(r.out)["summary"];
    CHECK(s["streaming"]["inspections"] == s["fused"]["inspections"]);
    CHECK(s["inspection_deficit"] == 0);
}

TEST_CASE("bench rejects zero sessions") {
    CHECK(invoke({"bench", scenario("bench.json"), "--sessions", "0"}).code == 2);
}

TEST_CASE("bpe train, encode, decode and stats") {
    const auto dir = scratch_dir();
    const auto merges = (dir / "merges.txt").string();
    const auto enc = (dir / "enc.txt").string();
    const auto dec = (dir / "dec.txt").string();
    REQUIRE(invoke({"bpe", "train", scenario("audio_corpus.txt"), "--base", "16", "--budget", "40", "--out", merges})
                .code == 0);
    REQUIRE(invoke({"bpe", "encode", merges, scenario("audio_corpus.txt"), "--out", enc}).code == 0);
    REQUIRE(invoke({"bpe", "decode", merges, enc, "--out", dec}).code == 0);
    CHECK(omni::read_text_file(dec) == omni::read_text_file(scenario("audio_corpus.txt")));

    const auto stats = invoke({"bpe", "stats", merges, scenario("audio_corpus.txt")});
    REQUIRE(stats.code == 0);
    const auto j = nlohmann::json::parse(stats.out);
    CHECK(j["ratio"].get<double>() < 1.0);
    CHECK(j["effective_rate_hz"].get<double>() == doctest::Approx(50.0 * j["ratio"].get<double>()));

    CHECK(invoke({"bpe", "decode", (dir / "nope.txt").string(), enc}).code == 2);
    CHECK(invoke({"bpe", "train", scenario("audio_corpus.txt"), "--base", "4", "--budget", "8"}).code == 3);
}

TEST_CASE("bpe stats on a ratio 0.64 corpus") {
    const auto dir = scratch_dir();
    // 100 raw tokens: 36 "0 1" pairs and 28 singles; merging (0,1) leaves 64.
    std::string line;
    for (int i = 0; i < 36; ++i) line += "0 1 ";
    for (int i = 0; i < 28; ++i) line += "2 ";
    line.pop_back();
    write_file(dir / "corpus064.txt", line + "\n");
    write_file(dir / "merges064.txt", "bpe v1 base=3\n0 1 3\n");
    const auto r = invoke({"bpe", "stats", (dir / "merges064.txt").string(), (dir / "corpus064.txt").string()});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["ratio"].get<double>() == doctest::Approx(0.64));
    CHECK(j["effective_rate_hz"].get<double>() == doctest::Approx(32.0));
    CHECK(j["reduction_pct"].get<double>() == doctest::Approx(36.0));
}

TEST_CASE("trace-diff reports the first divergent step") {
    const auto dir = scratch_dir();
    const auto a = invoke({"run", scenario("config.json"), scenario("backend.json"), scenario("prompt.json"), "--seed",
                           "1"})
                       .out;
    write_file(dir / "a.jsonl", a);
    std::istringstream in(a);
    auto trace = omni::read_trace_jsonl(in);
    REQUIRE(trace.events.size() >= 7);
    trace.events[6].token = trace.events[6].token == 0 ? 1 : 0;
    write_file(dir / "b.jsonl", omni::trace_to_jsonl(trace));

    const auto same = invoke({"trace-diff", (dir / "a.jsonl").string(), (dir / "a.jsonl").string()});
    CHECK(same.code == 0);
    const auto diff = invoke({"trace-diff", (dir / "a.jsonl").string(), (dir / "b.jsonl").string()});
    CHECK(diff.code == 1);
    CHECK(diff.out.find("step 7") != std::string::npos);
    CHECK(invoke({"trace-diff", (dir / "a.jsonl").string(), (dir / "missing.jsonl").string()}).code == 2);
}

TEST_CASE("moe report and checkpoint") {
    const auto dir = scratch_dir();
    const auto ckpt = (dir / "moe.json").string();
    const auto a = invoke({"moe", "--tokens", "300", "--seed", "4", "--save", ckpt});
    REQUIRE(a.code == 0);
    const auto report = nlohmann::json::parse(a.out);
    CHECK(report["summary"]["load"]["image"]["tokens"] == 100);
    const auto b = invoke({"moe", "--tokens", "300", "--seed", "4", "--load", ckpt});
    CHECK(b.out == a.out);
    CHECK(invoke({"moe", "--top-k", "9"}).code == 2);
}

TEST_CASE("layout emits the query sequence") {
    const auto r = invoke({"layout", scenario("layout.json")});
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    std::string line, last;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        last = line;
    }
    CHECK(lines == 343);
    CHECK(nlohmann::json::parse(last)["summary"]["total_len"] == 342);
    const auto dir = scratch_dir();
    write_file(dir / "bad_layout.json", R"({"d": 8, "scales": [[4,4],[2,2]]})");
    CHECK(invoke({"layout", (dir / "bad_layout.json").string()}).code == 2);
}
