#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "omni/constraint.hpp"
#include "omni/vocab.hpp"

namespace omni {

struct SamplingParams {
    double temperature = 1.0;
    std::optional<std::size_t> top_k;  // nullopt = unlimited
    double top_p = 1.0;
    bool greedy = false;

    // Throws PreconditionError.
    void validate() const;
};

// Seeded 64-bit stream. Uniforms are built from the top 53 bits of each
// mt19937_64 output so draws are identical on every standard library.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    double next_uniform();
    std::uint64_t draws() const { return draws_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t draws_ = 0;
};

struct Candidate {
    TokenId id;
    double prob;
};

// Final sampling distribution after masking, temperature, top-k and top-p,
// ordered by descending probability (ties: ascending id). Greedy yields the
// single masked argmax with probability 1.
std::vector<Candidate> sampling_distribution(std::span<const double> logits, const LogitMask& mask,
                                             const SamplingParams& params);

// Consumes exactly one draw from `rng`, greedy included.
TokenId sample(std::span<const double> logits, const LogitMask& mask, const SamplingParams& params, RngStream& rng);

// Softmax of masked logits over the full vocabulary; disallowed ids get 0.
std::vector<double> masked_softmax(std::span<const double> logits, const LogitMask& mask);

}  // namespace omni
