#include "omni/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "omni/errors.hpp"

namespace omni {

void SamplingParams::validate() const {
    if (!greedy && !(temperature > 0.0 && std::isfinite(temperature))) {
        throw PreconditionError("temperature must be > 0 unless greedy");
    }
    if (top_k && *top_k == 0) throw PreconditionError("top_k must be >= 1");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw PreconditionError("top_p must be in (0, 1]");
}

double RngStream::next_uniform() {
    ++draws_;
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

namespace {

void check_lengths(std::span<const double> logits, const LogitMask& mask) {
    if (logits.size() != mask.size()) {
        throw LengthMismatchError("logits length " + std::to_string(logits.size()) + " != mask length " +
                                  std::to_string(mask.size()));
    }
    if (mask.allowed_count == 0) throw DegenerateDistributionError("mask allows no token");
}

}  // namespace

std::vector<Candidate> sampling_distribution(std::span<const double> logits, const LogitMask& mask,
                                             const SamplingParams& params) {
    check_lengths(logits, mask);

    if (params.greedy) {
        std::optional<TokenId> best;
        for (TokenId id = 0; id < logits.size(); ++id) {
            if (mask.allows(id) && (!best || logits[id] > logits[*best])) best = id;
        }
        if (!best) throw DegenerateDistributionError("mask allows no token");
        return {{*best, 1.0}};
    }

    std::vector<Candidate> cands;
    cands.reserve(mask.allowed_count);
    for (TokenId id = 0; id < logits.size(); ++id) {
        if (mask.allows(id)) cands.push_back({id, logits[id] / params.temperature});
    }
    // `prob` holds the scaled logit until the softmax below.
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return a.prob > b.prob || (a.prob == b.prob && a.id < b.id);
    });
    if (params.top_k && *params.top_k < cands.size()) cands.resize(*params.top_k);

    const double peak = cands.front().prob;
    if (!std::isfinite(peak)) throw DegenerateDistributionError("non-finite logit among allowed tokens");
    double total = 0.0;
    for (auto& c : cands) {
        c.prob = std::exp(c.prob - peak);
        total += c.prob;
    }
    for (auto& c : cands) c.prob /= total;

    if (params.top_p < 1.0) {
        double cum = 0.0;
        std::size_t keep = cands.size();
        for (std::size_t i = 0; i < cands.size(); ++i) {
            cum += cands[i].prob;
            if (cum >= params.top_p) {
                keep = i + 1;
                break;
            }
        }
        cands.resize(keep);
        double kept = 0.0;
        for (const auto& c : cands) kept += c.prob;
        for (auto& c : cands) c.prob /= kept;
    }
    return cands;
}

TokenId sample(std::span<const double> logits, const LogitMask& mask, const SamplingParams& params, RngStream& rng) {
    const auto dist = sampling_distribution(logits, mask, params);
    const double u = rng.next_uniform();
    double cum = 0.0;
    for (const auto& c : dist) {
        cum += c.prob;
        if (u < cum) return c.id;
    }
    return dist.back().id;
}

std::vector<double> masked_softmax(std::span<const double> logits, const LogitMask& mask) {
    check_lengths(logits, mask);
    const auto masked = apply_mask(logits, mask);
    const double peak = *std::max_element(masked.begin(), masked.end());
    std::vector<double> probs(masked.size());
    double total = 0.0;
    for (std::size_t i = 0; i < masked.size(); ++i) {
        probs[i] = std::exp(masked[i] - peak);
        total += probs[i];
    }
    for (auto& p : probs) p /= total;
    return probs;
}

}  // namespace omni
