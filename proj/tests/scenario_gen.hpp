#pragma once

// Random TableBackend scenarios over the reference partition, for fuzzing the
// decoding engine.

#include <memory>
#include <random>
#include <vector>

#include "omni/backend.hpp"
#include "omni/engine.hpp"
#include "oracles.hpp"

namespace fuzz {

struct Scenario {
    std::shared_ptr<const omni::VocabPartition> partition;
    std::unique_ptr<omni::TableBackend> backend;
    omni::SessionConfig config;
    std::vector<omni::TokenId> prompt;
};

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    bool chance(double p) { return uniform(0.0, 1.0) < p; }
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

inline omni::LogitVector noisy_logits(Gen& g, const omni::VocabPartition& p) {
    using omni::ControlRole;
    omni::LogitVector v(p.total_size());
    for (auto& x : v) x = g.uniform(-2.0, 2.0);
    v[p.control_id(ControlRole::ImgStart)] += g.uniform(0.0, 4.5);
    v[p.control_id(ControlRole::AudStart)] += g.uniform(-1.0, 3.0);
    v[p.control_id(ControlRole::Eos)] += g.uniform(-2.0, 2.5);
    v[p.control_id(ControlRole::AudEnd)] += g.uniform(0.0, 4.0);
    return v;
}

inline Scenario make_scenario(std::uint64_t seed, std::size_t block_size,
                              omni::GenerationPolicy policy = omni::GenerationPolicy::FreeInterleave) {
    Gen g(seed);
    Scenario s;
    s.partition = oracle::fixture_partition();
    const auto& p = *s.partition;

    std::vector<omni::TableRule> rules;
    const std::size_t n_rules = 20 + g.index(30);
    std::vector<std::vector<omni::TokenId>> seen;
    for (std::size_t i = 0; i < n_rules; ++i) {
        std::vector<omni::TokenId> suffix(1 + g.index(2));
        for (auto& t : suffix) t = static_cast<omni::TokenId>(g.index(p.total_size()));
        if (std::find(seen.begin(), seen.end(), suffix) != seen.end()) continue;
        seen.push_back(suffix);
        rules.push_back({suffix, noisy_logits(g, p)});
    }
    s.backend = std::make_unique<omni::TableBackend>(p.total_size(), std::move(rules), noisy_logits(g, p));

    s.config.partition = s.partition;
    s.config.block_size = block_size;
    s.config.max_tokens = 40 + g.index(260);
    s.config.policy = policy;
    s.config.seed = g.engine()();
    s.config.max_audio_tokens = 8 + g.index(64);
    auto& sp = s.config.sampling;
    sp.greedy = g.chance(0.1);
    sp.temperature = g.uniform(0.5, 1.5);
    if (g.chance(0.4)) sp.top_k = 1 + g.index(64);
    sp.top_p = g.chance(0.4) ? g.uniform(0.5, 1.0) : 1.0;

    s.prompt = {p.control_id(omni::ControlRole::Bos)};
    if (g.chance(0.3)) {
        s.prompt.push_back(p.control_id(omni::ControlRole::ImgStart));
        for (std::size_t i = 0; i < block_size; ++i) s.prompt.push_back(p.range(omni::Modality::Image).start + g.index(256));
        s.prompt.push_back(p.control_id(omni::ControlRole::ImgEnd));
    }
    for (std::size_t i = g.index(4); i > 0; --i) s.prompt.push_back(static_cast<omni::TokenId>(g.index(256)));
    return s;
}

}  // namespace fuzz
