#pragma once

/**
 * Byte-pair encoding over discrete audio token streams.
 *
 * Symbols [0, base) are raw audio tokens; each merge introduces the symbol
 * base + rank. Training is standard greedy BPE (most frequent adjacent pair,
 * ties to the lexicographically smallest pair, never across sequence
 * boundaries). Encoding applies merges in rank order, left to right, and
 * decoding expands merged symbols back to raw tokens, so
 * decode(encode(x)) == x for every valid x.
 *
 * Merges file:
 *   bpe v1 base=<A>
 *   <left> <right> <merged>      one line per merge, rank order
 */

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace omni {

using Symbol = std::uint32_t;
using SymbolSequence = std::vector<Symbol>;

struct Merge {
    Symbol left;
    Symbol right;
    Symbol merged;
    friend bool operator==(const Merge&, const Merge&) = default;
};

struct BpeTrainOptions {
    // Pairs seen fewer times than this are never merged.
    std::size_t min_pair_frequency = 2;
};

class BpeCodec {
public:
    explicit BpeCodec(std::size_t base_size);
    // Validates rank numbering, uniqueness and constituent ordering.
    BpeCodec(std::size_t base_size, std::vector<Merge> merges, std::size_t vocab_budget = 0);

    std::size_t base_size() const { return base_size_; }
    std::size_t symbol_count() const { return base_size_ + merges_.size(); }
    std::size_t vocab_budget() const { return vocab_budget_; }
    const std::vector<Merge>& merges() const { return merges_; }

    // Throws AlphabetError for raw tokens >= base_size.
    SymbolSequence encode(std::span<const Symbol> raw) const;
    // Throws UnknownSymbolError for symbols >= symbol_count.
    SymbolSequence decode(std::span<const Symbol> encoded) const;

private:
    static std::uint64_t pair_key(Symbol a, Symbol b) { return (static_cast<std::uint64_t>(a) << 32) | b; }

    std::size_t base_size_;
    std::size_t vocab_budget_;
    std::vector<Merge> merges_;
    std::unordered_map<std::uint64_t, std::uint32_t> rank_;
};

// Throws EmptyCorpusError, PreconditionError (budget < base), AlphabetError.
BpeCodec train_bpe(const std::vector<SymbolSequence>& corpus, std::size_t base_size, std::size_t vocab_budget,
                   const BpeTrainOptions& options = {});

struct BpeStats {
    std::size_t original_len = 0;
    std::size_t encoded_len = 0;
    double ratio = 1.0;
    double reduction_pct = 0.0;
    double effective_rate_hz = 0.0;
};

inline constexpr double kDefaultAudioFrameRateHz = 50.0;

// Throws EmptyCorpusError when the corpus holds no tokens.
BpeStats compute_stats(const BpeCodec& codec, const std::vector<SymbolSequence>& corpus,
                       double frame_rate_hz = kDefaultAudioFrameRateHz);
nlohmann::ordered_json to_json(const BpeStats& stats);

void write_merges(std::ostream& out, const BpeCodec& codec);
// Throws ConfigError on malformed input.
BpeCodec read_merges(std::istream& in);

// Corpus text format: one sequence per line, tokens separated by spaces.
std::vector<SymbolSequence> read_corpus(std::istream& in);
void write_corpus(std::ostream& out, const std::vector<SymbolSequence>& corpus);

}  // namespace omni
