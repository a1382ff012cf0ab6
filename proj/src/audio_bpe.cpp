#include "omni/audio_bpe.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_set>

#include "omni/errors.hpp"

namespace omni {

BpeCodec::BpeCodec(std::size_t base_size) : BpeCodec(base_size, {}, base_size) {}

BpeCodec::BpeCodec(std::size_t base_size, std::vector<Merge> merges, std::size_t vocab_budget)
    : base_size_(base_size), vocab_budget_(0), merges_(std::move(merges)) {
    if (base_size_ == 0) throw PreconditionError("audio alphabet must be non-empty");
    for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
        const auto& m = merges_[rank];
        if (m.merged != base_size_ + rank) {
            throw PreconditionError("merge " + std::to_string(rank) + " must produce symbol " +
                                    std::to_string(base_size_ + rank));
        }
        if (m.left >= m.merged || m.right >= m.merged) {
            throw PreconditionError("merge " + std::to_string(rank) + " uses an undefined constituent");
        }
        if (!rank_.emplace(pair_key(m.left, m.right), static_cast<std::uint32_t>(rank)).second) {
            throw PreconditionError("pair (" + std::to_string(m.left) + "," + std::to_string(m.right) +
                                    ") merged twice");
        }
    }
    vocab_budget_ = std::max(vocab_budget, symbol_count());
}

SymbolSequence BpeCodec::encode(std::span<const Symbol> raw) const {
    const std::size_t n = raw.size();
    for (const auto s : raw) {
        if (s >= base_size_) {
            throw AlphabetError("raw token " + std::to_string(s) + " outside alphabet of size " +
                                std::to_string(base_size_));
        }
    }
    if (n < 2 || merges_.empty()) return SymbolSequence(raw.begin(), raw.end());

    // Doubly linked list over positions; a min-heap of (rank, position)
    // replays the rank-ordered, left-to-right merge passes in O(n log n).
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    SymbolSequence sym(raw.begin(), raw.end());
    std::vector<std::size_t> prev(n), next(n);
    std::vector<bool> alive(n, true);
    for (std::size_t i = 0; i < n; ++i) {
        prev[i] = i == 0 ? kNone : i - 1;
        next[i] = i + 1 == n ? kNone : i + 1;
    }

    using Entry = std::pair<std::uint32_t, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    auto push_pair = [&](std::size_t i) {
        if (i == kNone || next[i] == kNone) return;
        if (auto it = rank_.find(pair_key(sym[i], sym[next[i]])); it != rank_.end()) heap.emplace(it->second, i);
    };
    for (std::size_t i = 0; i + 1 < n; ++i) push_pair(i);

    while (!heap.empty()) {
        const auto [rank, i] = heap.top();
        heap.pop();
        if (!alive[i] || next[i] == kNone) continue;
        const std::size_t j = next[i];
        const auto it = rank_.find(pair_key(sym[i], sym[j]));
        if (it == rank_.end() || it->second != rank) continue;

        sym[i] = merges_[rank].merged;
        alive[j] = false;
        next[i] = next[j];
        if (next[j] != kNone) prev[next[j]] = i;
        push_pair(prev[i]);
        push_pair(i);
    }

    SymbolSequence out;
    for (std::size_t i = 0; i != kNone; i = next[i]) out.push_back(sym[i]);
    return out;
}

SymbolSequence BpeCodec::decode(std::span<const Symbol> encoded) const {
    SymbolSequence out;
    out.reserve(encoded.size() * 2);
    std::vector<Symbol> stack;
    for (const auto s : encoded) {
        if (s >= symbol_count()) {
            throw UnknownSymbolError("symbol " + std::to_string(s) + " not defined by codec with " +
                                     std::to_string(symbol_count()) + " symbols");
        }
        stack.push_back(s);
        while (!stack.empty()) {
            const Symbol top = stack.back();
            stack.pop_back();
            if (top < base_size_) {
                out.push_back(top);
            } else {
                const auto& m = merges_[top - base_size_];
                stack.push_back(m.right);
                stack.push_back(m.left);
            }
        }
    }
    return out;
}

namespace {

std::uint64_t key_of(Symbol a, Symbol b) { return (static_cast<std::uint64_t>(a) << 32) | b; }

struct HeapEntry {
    std::int64_t count;
    std::uint64_t key;
};

// Max count first; on equal counts the smallest (left, right) pair.
struct HeapOrder {
    bool operator()(const HeapEntry& a, const HeapEntry& b) const {
        if (a.count != b.count) return a.count < b.count;
        return a.key > b.key;
    }
};

}  // namespace

BpeCodec train_bpe(const std::vector<SymbolSequence>& corpus, std::size_t base_size, std::size_t vocab_budget,
                   const BpeTrainOptions& options) {
    if (std::all_of(corpus.begin(), corpus.end(), [](const SymbolSequence& s) { return s.empty(); })) {
        throw EmptyCorpusError("training corpus holds no tokens");
    }
    if (vocab_budget < base_size) throw PreconditionError("vocab_budget must be >= base_size");
    for (const auto& seq : corpus) {
        for (const auto s : seq) {
            if (s >= base_size) throw AlphabetError("corpus token " + std::to_string(s) + " outside alphabet");
        }
    }

    std::vector<SymbolSequence> words = corpus;
    std::unordered_map<std::uint64_t, std::int64_t> counts;
    std::unordered_map<std::uint64_t, std::unordered_set<std::uint32_t>> where;
    for (std::uint32_t w = 0; w < words.size(); ++w) {
        const auto& seq = words[w];
        for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
            const auto k = key_of(seq[i], seq[i + 1]);
            ++counts[k];
            where[k].insert(w);
        }
    }

    std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapOrder> heap;
    for (const auto& [k, c] : counts) heap.push({c, k});

    const auto min_count = static_cast<std::int64_t>(std::max<std::size_t>(options.min_pair_frequency, 1));
    std::vector<Merge> merges;
    std::unordered_set<std::uint64_t> merged_pairs;
    std::unordered_map<std::uint64_t, std::int64_t> delta;

    while (base_size + merges.size() < vocab_budget && !heap.empty()) {
        const auto top = heap.top();
        heap.pop();
        const auto it = counts.find(top.key);
        if (it == counts.end() || it->second != top.count || top.count <= 0) continue;  // stale
        if (top.count < min_count) break;
        if (merged_pairs.contains(top.key)) continue;

        const Symbol left = static_cast<Symbol>(top.key >> 32);
        const Symbol right = static_cast<Symbol>(top.key & 0xffffffffu);
        const Symbol merged = static_cast<Symbol>(base_size + merges.size());
        merges.push_back({left, right, merged});
        merged_pairs.insert(top.key);

        delta.clear();
        const auto touched = where[top.key];
        for (const auto w : touched) {
            auto& seq = words[w];
            for (std::size_t i = 0; i + 1 < seq.size(); ++i) --delta[key_of(seq[i], seq[i + 1])];

            SymbolSequence out;
            out.reserve(seq.size());
            for (std::size_t i = 0; i < seq.size(); ++i) {
                if (i + 1 < seq.size() && seq[i] == left && seq[i + 1] == right) {
                    out.push_back(merged);
                    ++i;
                } else {
                    out.push_back(seq[i]);
                }
            }
            seq = std::move(out);

            for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
                const auto k = key_of(seq[i], seq[i + 1]);
                ++delta[k];
                where[k].insert(w);
            }
        }
        for (const auto& [k, d] : delta) {
            if (d == 0) continue;
            auto& c = counts[k];
            c += d;
            if (c > 0) heap.push({c, k});
        }
        where.erase(top.key);
    }

    return BpeCodec(base_size, std::move(merges), vocab_budget);
}

BpeStats compute_stats(const BpeCodec& codec, const std::vector<SymbolSequence>& corpus, double frame_rate_hz) {
    BpeStats st;
    for (const auto& seq : corpus) {
        st.original_len += seq.size();
        st.encoded_len += codec.encode(seq).size();
    }
    if (st.original_len == 0) throw EmptyCorpusError("corpus holds no tokens");
    st.ratio = static_cast<double>(st.encoded_len) / static_cast<double>(st.original_len);
    st.reduction_pct = (1.0 - st.ratio) * 100.0;
    st.effective_rate_hz = frame_rate_hz * st.ratio;
    return st;
}

nlohmann::ordered_json to_json(const BpeStats& stats) {
    nlohmann::ordered_json j;
    j["original_len"] = stats.original_len;
    j["encoded_len"] = stats.encoded_len;
    j["ratio"] = stats.ratio;
    j["reduction_pct"] = stats.reduction_pct;
    j["effective_rate_hz"] = stats.effective_rate_hz;
    return j;
}

void write_merges(std::ostream& out, const BpeCodec& codec) {
    out << "bpe v1 base=" << codec.base_size() << '\n';
    for (const auto& m : codec.merges()) out << m.left << ' ' << m.right << ' ' << m.merged << '\n';
}

BpeCodec read_merges(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("merges file is empty");
    constexpr std::string_view kHeader = "bpe v1 base=";
    if (line.rfind(kHeader, 0) != 0) throw ConfigError("merges file: bad header \"" + line + "\"");
    std::size_t base = 0;
    try {
        std::size_t used = 0;
        base = std::stoul(line.substr(kHeader.size()), &used);
        if (used != line.size() - kHeader.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw ConfigError("merges file: bad base in header \"" + line + "\"");
    }

    std::vector<Merge> merges;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Merge m{};
        std::string extra;
        if (!(ls >> m.left >> m.right >> m.merged) || (ls >> extra)) {
            throw ConfigError("merges file line " + std::to_string(lineno) + ": expected \"<left> <right> <merged>\"");
        }
        merges.push_back(m);
    }
    try {
        return BpeCodec(base, std::move(merges));
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("merges file: ") + e.what());
    }
}

std::vector<SymbolSequence> read_corpus(std::istream& in) {
    std::vector<SymbolSequence> corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        SymbolSequence seq;
        std::string tok;
        while (ls >> tok) {
            try {
                std::size_t used = 0;
                const auto v = std::stoul(tok, &used);
                if (used != tok.size() || tok.front() == '-') throw std::invalid_argument(tok);
                seq.push_back(static_cast<Symbol>(v));
            } catch (const std::exception&) {
                throw ConfigError("corpus line " + std::to_string(lineno) + ": bad token \"" + tok + "\"");
            }
        }
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

void write_corpus(std::ostream& out, const std::vector<SymbolSequence>& corpus) {
    for (const auto& seq : corpus) {
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (i) out << ' ';
            out << seq[i];
        }
        out << '\n';
    }
}

}  // namespace omni
