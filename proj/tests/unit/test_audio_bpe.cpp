#include <random>
#include <sstream>

#include "doctest.h"
#include "omni/audio_bpe.hpp"
#include "omni/errors.hpp"
#include "oracles.hpp"

using namespace omni;

namespace {

std::vector<SymbolSequence> random_corpus(std::uint64_t seed, std::size_t n, std::size_t alphabet,
                                          std::size_t max_len) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len(1, max_len);
    // Skewed symbols so that merges actually happen.
    std::geometric_distribution<Symbol> sym(0.35);
    std::vector<SymbolSequence> corpus(n);
    for (auto& seq : corpus) {
        seq.resize(len(rng));
        for (auto& s : seq) s = std::min<Symbol>(sym(rng), static_cast<Symbol>(alphabet - 1));
    }
    return corpus;
}

}  // namespace

TEST_CASE("single most frequent pair") {
    const auto codec = train_bpe({{1, 2, 1, 2, 1, 2}}, 4, 5);
    REQUIRE(codec.merges().size() == 1);
    CHECK(codec.merges()[0] == Merge{1, 2, 4});
}

TEST_CASE("merges stack on earlier merges") {
    BpeTrainOptions opts;
    opts.min_pair_frequency = 1;
    const auto codec = train_bpe({{1, 2, 1, 2}}, 4, 6, opts);
    REQUIRE(codec.merges().size() == 2);
    CHECK(codec.merges()[0] == Merge{1, 2, 4});
    CHECK(codec.merges()[1] == Merge{4, 4, 5});

    // The default threshold refuses a pair seen once.
    CHECK(train_bpe({{1, 2, 1, 2}}, 4, 6).merges().size() == 1);
}

TEST_CASE("encode and decode with a fixed codec") {
    const BpeCodec codec(4, {{1, 2, 4}, {4, 4, 5}});
    CHECK(codec.encode(std::vector<Symbol>{1, 2, 1, 2, 3}) == SymbolSequence{5, 3});
    const BpeCodec one(4, {{1, 2, 4}});
    CHECK(one.encode(std::vector<Symbol>{1, 2, 1, 2, 3}) == SymbolSequence{4, 4, 3});
    CHECK(codec.decode(std::vector<Symbol>{5}) == SymbolSequence{1, 2, 1, 2});
    CHECK(codec.encode(std::vector<Symbol>{}).empty());
    CHECK_THROWS_AS(codec.decode(std::vector<Symbol>{99}), UnknownSymbolError);
    CHECK_THROWS_AS(codec.encode(std::vector<Symbol>{4}), AlphabetError);
}

TEST_CASE("training error paths") {
    CHECK_THROWS_AS(train_bpe({}, 4, 8), EmptyCorpusError);
    CHECK_THROWS_AS(train_bpe({{}, {}}, 4, 8), EmptyCorpusError);
    CHECK_THROWS_AS(train_bpe({{1, 2}}, 4, 3), PreconditionError);
    CHECK_THROWS_AS(train_bpe({{1, 7}}, 4, 8), AlphabetError);
    CHECK(train_bpe({{1, 2}}, 4, 4).merges().empty());
}

TEST_CASE("codec construction validates merges") {
    CHECK_THROWS_AS(BpeCodec(4, {{1, 2, 5}}), PreconditionError);
    CHECK_THROWS_AS(BpeCodec(4, {{1, 2, 4}, {1, 2, 5}}), PreconditionError);
    CHECK_THROWS_AS(BpeCodec(4, {{1, 9, 4}}), PreconditionError);
}

TEST_CASE("stats arithmetic") {
    const std::vector<SymbolSequence> corpus = {{0, 1, 2, 3}};
    const auto id = compute_stats(BpeCodec(4), corpus);
    CHECK(id.ratio == 1.0);
    CHECK(id.effective_rate_hz == 50.0);
    CHECK(id.reduction_pct == 0.0);

    const BpeCodec half(4, {{0, 1, 4}, {2, 3, 5}});
    const auto s = compute_stats(half, corpus);
    CHECK(s.original_len == 4);
    CHECK(s.encoded_len == 2);
    CHECK(s.ratio == 0.5);
    CHECK(s.reduction_pct == doctest::Approx(50.0));
    CHECK(s.effective_rate_hz == doctest::Approx(25.0));
    CHECK_THROWS_AS(compute_stats(half, {}), EmptyCorpusError);

    const auto j = to_json(s);
    CHECK(j.dump() == R"({"original_len":4,"encoded_len":2,"ratio":0.5,"reduction_pct":50.0,"effective_rate_hz":25.0})");
}

TEST_CASE("training and encoding agree with the textbook oracle") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto corpus = random_corpus(seed, 20, 12, 60);
        const std::size_t budget = 12 + 4 + seed % 20;
        const auto codec = train_bpe(corpus, 12, budget);
        const auto expect = oracle::naive_bpe_train(corpus, 12, budget);
        REQUIRE(codec.merges() == expect);
        for (const auto& seq : corpus) {
            CHECK(codec.encode(seq) == oracle::naive_bpe_encode(expect, seq));
            CHECK(codec.decode(codec.encode(seq)) == seq);
        }
        CHECK(codec.symbol_count() <= budget);
    }
}

TEST_CASE("round trip on sequences unseen in training") {
    const auto codec = train_bpe(random_corpus(1, 50, 16, 100), 16, 80);
    for (const auto& seq : random_corpus(2, 200, 16, 300)) CHECK(codec.decode(codec.encode(seq)) == seq);
}

TEST_CASE("larger budgets never lengthen the encoding") {
    const auto corpus = random_corpus(3, 40, 10, 120);
    std::size_t prev = compute_stats(BpeCodec(10), corpus).encoded_len;
    for (std::size_t budget = 11; budget <= 60; budget += 7) {
        const auto len = compute_stats(train_bpe(corpus, 10, budget), corpus).encoded_len;
        CHECK(len <= prev);
        prev = len;
    }
}

TEST_CASE("merges never cross sequence boundaries") {
    // "1 2" only occurs across the boundary between the two sequences.
    const auto codec = train_bpe({{0, 0, 1}, {2, 0, 0}, {0, 0}}, 3, 10);
    for (const auto& m : codec.merges()) CHECK_FALSE((m.left == 1 && m.right == 2));
}

TEST_CASE("training is deterministic") {
    const auto corpus = random_corpus(4, 30, 8, 80);
    CHECK(train_bpe(corpus, 8, 40).merges() == train_bpe(corpus, 8, 40).merges());
}

TEST_CASE("merges file round trip") {
    const auto codec = train_bpe(random_corpus(5, 30, 8, 80), 8, 30);
    std::stringstream buf;
    write_merges(buf, codec);
    CHECK(buf.str().rfind("bpe v1 base=8\n", 0) == 0);
    const auto back = read_merges(buf);
    CHECK(back.base_size() == 8);
    CHECK(back.merges() == codec.merges());

    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return read_merges(in);
    };
    CHECK_THROWS_AS(parse(""), ConfigError);
    CHECK_THROWS_AS(parse("bpe v2 base=4\n"), ConfigError);
    CHECK_THROWS_AS(parse("bpe v1 base=4\n1 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("bpe v1 base=4\n1 2 7\n"), ConfigError);
    CHECK_THROWS_AS(parse("bpe v1 base=4\n1 x 4\n"), ConfigError);
    CHECK(parse("bpe v1 base=4\n1 2 4\n").merges().size() == 1);
}

TEST_CASE("corpus text format") {
    const std::vector<SymbolSequence> corpus = {{1, 2, 3}, {4}, {5, 6}};
    std::stringstream buf;
    write_corpus(buf, corpus);
    CHECK(buf.str() == "1 2 3\n4\n5 6\n");
    CHECK(read_corpus(buf) == corpus);
    std::istringstream bad("1 two 3\n");
    CHECK_THROWS_AS(read_corpus(bad), ConfigError);
}
