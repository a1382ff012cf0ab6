#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "omni/backend.hpp"
#include "omni/errors.hpp"
#include "omni/sampler.hpp"
#include "oracles.hpp"
#include "scenario_gen.hpp"

using namespace omni;

namespace {

constexpr TokenId kBos = 768;

TokenId argmax(const LogitVector& v) {
    return static_cast<TokenId>(std::max_element(v.begin(), v.end()) - v.begin());
}

TableBackend scripted() {
    const std::pair<TokenId, double> peak7[] = {{7, 5.0}};
    const std::pair<TokenId, double> peak9[] = {{9, 5.0}};
    const std::pair<TokenId, double> fallback[] = {{3, 1.0}};
    std::vector<TableRule> rules = {
        {{kBos}, make_logits(774, 0.0, peak7)},
        {{kBos, 7}, make_logits(774, 0.0, peak9)},
    };
    return TableBackend(774, std::move(rules), make_logits(774, -1.0, fallback));
}

}  // namespace

TEST_CASE("table backend rule lookup") {
    const auto b = scripted();
    CHECK(argmax(b.next_logits(std::vector<TokenId>{kBos})) == 7);
    CHECK(argmax(b.next_logits(std::vector<TokenId>{1, kBos, 7})) == 9);

    const std::pair<TokenId, double> fb[] = {{3, 1.0}};
    CHECK(b.next_logits(std::vector<TokenId>{42}) == make_logits(774, -1.0, fb));
    CHECK(b.next_logits(std::vector<TokenId>{}) == make_logits(774, -1.0, fb));
    CHECK_THROWS_AS(b.next_logits(std::vector<TokenId>{774}), OutOfVocabError);
}

TEST_CASE("table backend prefers the longest matching suffix") {
    const std::pair<TokenId, double> a[] = {{1, 1.0}};
    const std::pair<TokenId, double> bpk[] = {{2, 1.0}};
    std::vector<TableRule> rules = {
        {{5}, make_logits(10, 0.0, a)},
        {{4, 5}, make_logits(10, 0.0, bpk)},
    };
    const TableBackend b(10, std::move(rules), LogitVector(10, 0.0));
    CHECK(argmax(b.next_logits(std::vector<TokenId>{3, 5})) == 1);
    CHECK(argmax(b.next_logits(std::vector<TokenId>{4, 5})) == 2);
}

TEST_CASE("table backend validates its rules") {
    CHECK_THROWS_AS(TableBackend(10, {{{1, 2, 3, 4, 5, 6, 7, 8, 9}, LogitVector(10)}}, LogitVector(10)), ConfigError);
    CHECK_THROWS_AS(TableBackend(10, {{{}, LogitVector(10)}}, LogitVector(10)), ConfigError);
    CHECK_THROWS_AS(TableBackend(10, {{{1}, LogitVector(9)}}, LogitVector(10)), LengthMismatchError);
    CHECK_THROWS_AS(TableBackend(10, {}, LogitVector(3)), LengthMismatchError);
    CHECK_THROWS_AS(TableBackend(10, {{{1}, LogitVector(10)}, {{1}, LogitVector(10)}}, LogitVector(10)), ConfigError);
}

TEST_CASE("unigram logits follow smoothed counts") {
    const NGramBackend b(4, 1, {{1, 1, 1, 2}});
    const auto v = b.next_logits(std::vector<TokenId>{});
    // Hand count: three 1s, one 2; alpha = 1.
    CHECK(v[1] - v[2] == doctest::Approx(std::log((3.0 + 1.0) / (1.0 + 1.0))).epsilon(1e-15));
    CHECK(v[0] == doctest::Approx(0.0));
    for (const auto x : v) CHECK(std::isfinite(x));
}

TEST_CASE("bigram logits condition on the previous token") {
    const NGramBackend b(5, 2, {{1, 2, 1, 3, 1, 2}}, 0.5);
    const auto after1 = b.next_logits(std::vector<TokenId>{0, 1});
    CHECK(after1[2] == doctest::Approx(std::log(2.5)));
    CHECK(after1[3] == doctest::Approx(std::log(1.5)));
    CHECK(after1[4] == doctest::Approx(std::log(0.5)));
    const auto unseen = b.next_logits(std::vector<TokenId>{4});
    CHECK(unseen[0] == doctest::Approx(std::log(0.5)));
    CHECK_THROWS_AS(NGramBackend(5, 0, {}), PreconditionError);
    CHECK_THROWS_AS(NGramBackend(5, 1, {}, 0.0), PreconditionError);
}

TEST_CASE("block cursor of length one equals one next_logits call") {
    const auto b = scripted();
    const std::vector<TokenId> ctx{kBos};
    auto cur = b.next_block_logits(ctx, 1);
    CHECK(cur->logits() == b.next_logits(ctx));
    cur->accept(7);
    CHECK_THROWS_AS(cur->logits(), PreconditionError);
    CHECK_THROWS_AS(b.next_block_logits(ctx, 0), PreconditionError);
}

TEST_CASE("fused cursor matches step-by-step queries under greedy choice") {
    const auto b = scripted();
    const auto mask = mask_for(*oracle::fixture_partition(), ModalityConstraint::everything());
    SamplingParams greedy;
    greedy.greedy = true;

    std::vector<TokenId> stepwise{kBos};
    std::vector<LogitVector> expected;
    RngStream r1(0);
    for (int i = 0; i < 4; ++i) {
        expected.push_back(b.next_logits(stepwise));
        stepwise.push_back(sample(expected.back(), mask, greedy, r1));
    }

    RngStream r2(0);
    auto cur = b.next_block_logits(std::vector<TokenId>{kBos}, 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(cur->logits() == expected[static_cast<std::size_t>(i)]);
        cur->accept(sample(cur->logits(), mask, greedy, r2));
    }
    CHECK(stepwise == std::vector<TokenId>{kBos, 7, 9, 3, 3});
}

TEST_CASE("path equivalence on random backends and random choices") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto sc = fuzz::make_scenario(seed, 8);
        fuzz::Gen g(seed + 1000);
        std::vector<TokenId> ctx = sc.prompt;
        auto cur = sc.backend->next_block_logits(ctx, 12);
        for (int i = 0; i < 12; ++i) {
            REQUIRE(cur->logits() == sc.backend->next_logits(ctx));
            const auto tok = static_cast<TokenId>(g.index(774));
            cur->accept(tok);
            ctx.push_back(tok);
        }
    }
}

TEST_CASE("backend scenario JSON") {
    const auto j = nlohmann::json::parse(R"({
        "vocab": {"total_size": 774,
                  "ranges": {"text": [0,256], "image": [256,512], "audio": [512,768]},
                  "control": {"BOS": 768, "EOS": 769, "IMG_START": 770, "IMG_END": 771,
                              "AUD_START": 772, "AUD_END": 773}},
        "rules": [{"suffix": [768], "peaks": [[7, 5.0]], "base": 0.0}],
        "fallback": {"peaks": [[769, 3.0]], "base": -1.0}
    })");
    const auto sc = backend_from_json(j);
    CHECK(sc.partition->total_size() == 774);
    CHECK(argmax(sc.backend->next_logits(std::vector<TokenId>{768})) == 7);
    CHECK(argmax(sc.backend->next_logits(std::vector<TokenId>{1})) == 769);

    auto bad = j;
    bad["rules"][0]["peaks"][0][0] = 9999;
    CHECK_THROWS_AS(backend_from_json(bad), ConfigError);
    bad = j;
    bad["type"] = "transformer";
    CHECK_THROWS_AS(backend_from_json(bad), ConfigError);

    auto ngram = j;
    ngram["type"] = "ngram";
    ngram["order"] = 1;
    ngram["corpus"] = nlohmann::json::array({nlohmann::json::array({1, 1, 2})});
    const auto ng = backend_from_json(ngram);
    CHECK(argmax(ng.backend->next_logits(std::vector<TokenId>{})) == 1);
}
