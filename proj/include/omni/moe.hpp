#pragma once

/**
 * Toy mixture-of-experts layer with one router per modality.
 *
 * Text, image and audio tokens are gated by their own E x d router matrix;
 * the E experts (d -> h -> d feed-forward, ReLU) are shared. Control tokens
 * are never routed.
 */

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"
#include "omni/matrix.hpp"
#include "omni/vocab.hpp"

namespace omni {

struct MoeShape {
    std::size_t d = 8;       // hidden dimension
    std::size_t experts = 4;
    std::size_t top_k = 2;
    std::size_t inner = 16;  // expert inner width
};

struct ExpertWeights {
    Matrix w_in;                 // inner x d
    std::vector<double> b_in;    // inner
    Matrix w_out;                // d x inner
    std::vector<double> b_out;   // d
};

inline constexpr std::size_t kRoutedModalities = 3;  // text, image, audio

struct MoeParams {
    MoeShape shape;
    std::array<Matrix, kRoutedModalities> routers;  // indexed by Modality
    std::vector<ExpertWeights> experts;

    // Every entry drawn from uniform(-0.1, 0.1) with a seeded mt19937_64.
    static MoeParams random(const MoeShape& shape, std::uint64_t seed);
    // Throws ShapeMismatchError / PreconditionError.
    void validate() const;
};

struct GateDecision {
    Modality modality = Modality::Text;
    std::vector<double> logits;          // router output
    std::vector<double> probs;           // softmax over all experts
    std::vector<std::size_t> selected;   // top-k, descending prob, ties to lower index
    std::vector<double> weights;         // probs of `selected`, renormalized
};

struct LoadStats {
    std::array<std::vector<std::uint64_t>, kRoutedModalities> counts;  // [modality][expert]
    std::array<std::uint64_t, kRoutedModalities> tokens{};
    std::array<double, kRoutedModalities> entropy{};  // nats; 0 when nothing dispatched
};

// ReLU feed-forward: w_out * max(0, w_in * x + b_in) + b_out.
std::vector<double> expert_forward(const ExpertWeights& expert, std::span<const double> x);

class MoeLayer {
public:
    explicit MoeLayer(MoeParams params);

    // Throws UnknownModalityError for Control, ShapeMismatchError for |x| != d.
    GateDecision route(std::span<const double> x, Modality modality) const;
    // Sum over selected experts of weight * expert(x). Safe to call
    // concurrently; dispatch counts are atomic.
    std::vector<double> forward(std::span<const double> x, Modality modality) const;

    LoadStats load_report() const;
    void reset_stats();

    const MoeParams& params() const { return params_; }
    const MoeShape& shape() const { return params_.shape; }

private:
    MoeParams params_;
    std::unique_ptr<std::atomic<std::uint64_t>[]> dispatch_;  // [modality * E + expert]
    std::unique_ptr<std::atomic<std::uint64_t>[]> routed_;    // [modality]
};

// Checkpoint JSON: {"d", "experts", "top_k", "inner", "routers": {"text": [...], ...},
// "expert_weights": [{"w_in", "b_in", "w_out", "b_out"}, ...]}, matrices row-major.
nlohmann::ordered_json to_json(const MoeParams& params);
MoeParams moe_params_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const LoadStats& stats);

}  // namespace omni
