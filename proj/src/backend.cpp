#include "omni/backend.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "omni/errors.hpp"
#include "omni/json_io.hpp"

namespace omni {

// Generic cursor: keeps its own copy of the context and recomputes through
// Backend::compute after each accepted token. Logits are produced lazily so
// accepting the last token of a block costs nothing.
class ReplayCursor final : public BlockCursor {
public:
    ReplayCursor(const Backend& backend, ContextView context, std::size_t n)
        : backend_(backend),
          tokens_(context.tokens.begin(), context.tokens.end()),
          conditioning_(context.conditioning),
          length_(n) {}

    const LogitVector& logits() override {
        if (position_ >= length_) throw PreconditionError("block cursor exhausted");
        if (dirty_) {
            current_ = backend_.compute(ContextView(tokens_, conditioning_));
            dirty_ = false;
        }
        return current_;
    }

    void accept(TokenId token) override {
        if (position_ >= length_) throw PreconditionError("block cursor exhausted");
        backend_.check_token(token);
        tokens_.push_back(token);
        ++position_;
        dirty_ = true;
    }

    std::size_t position() const override { return position_; }
    std::size_t length() const override { return length_; }

private:
    const Backend& backend_;
    std::vector<TokenId> tokens_;
    std::string conditioning_;
    std::size_t length_;
    std::size_t position_ = 0;
    bool dirty_ = true;
    LogitVector current_;
};

void Backend::check_token(TokenId token) const {
    if (token >= vocab_size()) {
        throw OutOfVocabError("context token " + std::to_string(token) + " >= vocabulary size " +
                              std::to_string(vocab_size()));
    }
}

LogitVector Backend::next_logits(ContextView context) const {
    for (const auto t : context.tokens) check_token(t);
    return compute(context);
}

std::unique_ptr<BlockCursor> Backend::next_block_logits(ContextView context, std::size_t n) const {
    if (n == 0) throw PreconditionError("block length must be >= 1");
    for (const auto t : context.tokens) check_token(t);
    return std::make_unique<ReplayCursor>(*this, context, n);
}

LogitVector make_logits(std::size_t vocab_size, double base, std::span<const std::pair<TokenId, double>> peaks) {
    LogitVector v(vocab_size, base);
    for (const auto& [id, logit] : peaks) {
        if (id >= vocab_size) throw OutOfVocabError("peak id " + std::to_string(id) + " out of vocabulary");
        v[id] = logit;
    }
    return v;
}

TableBackend::TableBackend(std::size_t vocab_size, std::vector<TableRule> rules, LogitVector fallback)
    : vocab_size_(vocab_size), rules_(std::move(rules)), fallback_(std::move(fallback)) {
    if (fallback_.size() != vocab_size_) throw LengthMismatchError("fallback logits length != vocabulary size");
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& rule = rules_[i];
        if (rule.suffix.empty() || rule.suffix.size() > kMaxSuffix) {
            throw ConfigError("rule suffix length must be in [1, " + std::to_string(kMaxSuffix) + "]");
        }
        for (const auto t : rule.suffix) check_token(t);
        if (rule.logits.size() != vocab_size_) throw LengthMismatchError("rule logits length != vocabulary size");
        if (!by_suffix_.emplace(rule.suffix, i).second) throw ConfigError("duplicate rule suffix");
    }
}

LogitVector TableBackend::compute(ContextView context) const {
    const auto& tokens = context.tokens;
    std::vector<TokenId> key;
    for (std::size_t len = std::min(kMaxSuffix, tokens.size()); len > 0; --len) {
        key.assign(tokens.end() - static_cast<std::ptrdiff_t>(len), tokens.end());
        if (auto it = by_suffix_.find(key); it != by_suffix_.end()) return rules_[it->second].logits;
    }
    return fallback_;
}

NGramBackend::NGramBackend(std::size_t vocab_size, std::size_t order,
                           const std::vector<std::vector<TokenId>>& corpus, double alpha)
    : vocab_size_(vocab_size), order_(order), alpha_(alpha) {
    if (order_ < 1) throw PreconditionError("n-gram order must be >= 1");
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw PreconditionError("smoothing alpha must be > 0");
    for (const auto& seq : corpus) {
        for (std::size_t pos = 0; pos < seq.size(); ++pos) {
            check_token(seq[pos]);
            const std::size_t hist = std::min(order_ - 1, pos);
            std::vector<TokenId> history(seq.begin() + static_cast<std::ptrdiff_t>(pos - hist),
                                         seq.begin() + static_cast<std::ptrdiff_t>(pos));
            ++counts_[std::move(history)][seq[pos]];
        }
    }
}

LogitVector NGramBackend::compute(ContextView context) const {
    const auto& tokens = context.tokens;
    const std::size_t hist = std::min(order_ - 1, tokens.size());
    const std::vector<TokenId> history(tokens.end() - static_cast<std::ptrdiff_t>(hist), tokens.end());

    LogitVector out(vocab_size_, std::log(alpha_));
    if (auto it = counts_.find(history); it != counts_.end()) {
        for (const auto& [id, count] : it->second) out[id] = std::log(static_cast<double>(count) + alpha_);
    }
    return out;
}

namespace {

LogitVector logits_from_json(const nlohmann::json& j, std::size_t vocab_size) {
    const double base = json_get_or<double>(j, "base", 0.0);
    const auto peaks = json_get_or<std::vector<std::pair<TokenId, double>>>(j, "peaks", {});
    return make_logits(vocab_size, base, peaks);
}

}  // namespace

BackendScenario backend_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("backend scenario must be a JSON object");
    if (!j.contains("vocab")) throw ConfigError("missing field \"vocab\"");
    auto partition = std::make_shared<const VocabPartition>(resolve_partition(j.at("vocab"), base_dir));
    const std::size_t vocab = partition->total_size();

    const auto type = json_get_or<std::string>(j, "type", "table");
    BackendScenario out;
    out.partition = partition;
    try {
        if (type == "table") {
            std::vector<TableRule> rules;
            for (const auto& r : json_get_or<nlohmann::json>(j, "rules", nlohmann::json::array())) {
                rules.push_back({json_get<std::vector<TokenId>>(r, "suffix"), logits_from_json(r, vocab)});
            }
            const auto fallback = json_get_or<nlohmann::json>(j, "fallback", nlohmann::json::object());
            out.backend = std::make_unique<TableBackend>(vocab, std::move(rules), logits_from_json(fallback, vocab));
        } else if (type == "ngram") {
            out.backend = std::make_unique<NGramBackend>(
                vocab, json_get<std::size_t>(j, "order"), json_get<std::vector<std::vector<TokenId>>>(j, "corpus"),
                json_get_or<double>(j, "alpha", 1.0));
        } else {
            throw ConfigError("unknown backend type \"" + type + "\"");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        // Invalid ids or shapes in a scenario file are configuration problems.
        throw ConfigError(std::string("backend scenario: ") + e.what());
    }
    return out;
}

BackendScenario load_backend_scenario(const std::filesystem::path& path) {
    return backend_from_json(read_json_file(path), path.parent_path());
}

}  // namespace omni
