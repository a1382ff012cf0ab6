#pragma once

/**
 * Logits providers.
 *
 * A Backend maps a token context to a dense logit vector over the unified
 * vocabulary. Two deterministic mocks stand in for a real model:
 *
 *   TableBackend  scripted longest-suffix lookup, for FSM scenarios
 *   NGramBackend  smoothed n-gram counts from a seed corpus
 *
 * Block generation goes through an incremental BlockCursor: the engine reads
 * the logits for position i, picks a token, and feeds it back with accept().
 * Cursor logits are identical to next_logits() on the extended context.
 */

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "omni/constraint.hpp"
#include "omni/vocab.hpp"

namespace omni {

// Token history plus an opaque conditioning blob (upstream hidden state).
// Mock backends ignore the blob.
struct ContextView {
    std::span<const TokenId> tokens;
    std::string_view conditioning;

    ContextView() = default;
    ContextView(std::span<const TokenId> t, std::string_view c = {}) : tokens(t), conditioning(c) {}
    ContextView(const std::vector<TokenId>& t, std::string_view c = {}) : tokens(t), conditioning(c) {}
};

class BlockCursor {
public:
    virtual ~BlockCursor() = default;

    // Logits for the current block position. Throws PreconditionError once
    // the block is exhausted.
    virtual const LogitVector& logits() = 0;
    // Appends the chosen token and advances one position.
    virtual void accept(TokenId token) = 0;

    virtual std::size_t position() const = 0;
    virtual std::size_t length() const = 0;
};

class Backend {
public:
    virtual ~Backend() = default;

    virtual std::size_t vocab_size() const = 0;

    // Throws OutOfVocabError on an invalid context token.
    LogitVector next_logits(ContextView context) const;

    // Throws PreconditionError when n == 0.
    std::unique_ptr<BlockCursor> next_block_logits(ContextView context, std::size_t n) const;

protected:
    // Context already validated.
    virtual LogitVector compute(ContextView context) const = 0;

    void check_token(TokenId token) const;

    friend class ReplayCursor;
};

// Convenience: `base` everywhere, then the listed (id, logit) peaks.
LogitVector make_logits(std::size_t vocab_size, double base, std::span<const std::pair<TokenId, double>> peaks);

struct TableRule {
    std::vector<TokenId> suffix;
    LogitVector logits;
};

class TableBackend final : public Backend {
public:
    static constexpr std::size_t kMaxSuffix = 8;

    TableBackend(std::size_t vocab_size, std::vector<TableRule> rules, LogitVector fallback);

    std::size_t vocab_size() const override { return vocab_size_; }
    std::size_t rule_count() const { return rules_.size(); }

protected:
    LogitVector compute(ContextView context) const override;

private:
    std::size_t vocab_size_;
    std::vector<TableRule> rules_;
    std::map<std::vector<TokenId>, std::size_t> by_suffix_;
    LogitVector fallback_;
};

class NGramBackend final : public Backend {
public:
    NGramBackend(std::size_t vocab_size, std::size_t order, const std::vector<std::vector<TokenId>>& corpus,
                 double alpha = 1.0);

    std::size_t vocab_size() const override { return vocab_size_; }
    std::size_t order() const { return order_; }
    double alpha() const { return alpha_; }

protected:
    LogitVector compute(ContextView context) const override;

private:
    std::size_t vocab_size_;
    std::size_t order_;
    double alpha_;
    std::map<std::vector<TokenId>, std::unordered_map<TokenId, std::uint64_t>> counts_;
};

struct BackendScenario {
    std::shared_ptr<const VocabPartition> partition;
    std::unique_ptr<Backend> backend;
};

// Scenario JSON:
//   {"vocab": <partition file path | inline partition>,
//    "type": "table" (default) | "ngram",
//    table: "rules": [{"suffix": [ids], "peaks": [[id, logit], ...], "base": logit}],
//           "fallback": {"peaks": [...], "base": logit}
//    ngram: "order": n, "alpha": a, "corpus": [[ids], ...]}
// Relative vocab paths resolve against `base_dir`.
BackendScenario backend_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
BackendScenario load_backend_scenario(const std::filesystem::path& path);

}  // namespace omni
