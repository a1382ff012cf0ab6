#pragma once

/**
 * Multi-scale query-token layout and representation alignment.
 *
 * A layout stacks K grids of strictly increasing size. Each grid's slots are
 * wrapped in a start/end marker pair and the per-scale segments are
 * concatenated in scale order:
 *
 *   [start_1, slot_1(0,0) ... slot_1(h-1,w-1), end_1, start_2, ...]
 *
 * so total_len = sum_k (w_k * h_k + 2). Slot ids are 0..sum(N_k)-1 in that
 * order; marker ids follow, start_k = S + 2k and end_k = S + 2k + 1.
 */

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "omni/matrix.hpp"

namespace omni {

using FeatureMatrix = Matrix;

struct ScaleSpec {
    std::size_t width = 1;
    std::size_t height = 1;

    std::size_t slots() const { return width * height; }
};

struct GridPos {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const GridPos&, const GridPos&) = default;
};

class MultiScaleLayout {
public:
    // Throws EmptyScaleListError, NonIncreasingScalesError, PreconditionError
    // (zero-sized grid, or d not a positive multiple of 4).
    static MultiScaleLayout build(std::span<const std::pair<std::size_t, std::size_t>> scales, std::size_t d);

    std::size_t scale_count() const { return scales_.size(); }
    const ScaleSpec& scale(std::size_t k) const { return scales_.at(k); }
    std::size_t dim() const { return d_; }
    std::size_t total_len() const { return total_len_; }
    std::size_t total_slots() const { return total_slots_; }

    std::uint32_t start_id(std::size_t k) const;
    std::uint32_t end_id(std::size_t k) const;
    std::uint32_t slot_id(std::size_t k, GridPos pos) const;
    // Offset of scale k's first slot id.
    std::size_t slot_offset(std::size_t k) const { return offsets_.at(k); }

private:
    MultiScaleLayout() = default;

    std::vector<ScaleSpec> scales_;
    std::vector<std::size_t> offsets_;
    std::size_t d_ = 0;
    std::size_t total_len_ = 0;
    std::size_t total_slots_ = 0;
};

inline MultiScaleLayout build_layout(std::span<const std::pair<std::size_t, std::size_t>> scales, std::size_t d) {
    return MultiScaleLayout::build(scales, d);
}

// Phase shift of scale k (0-based): (k + 1) * pi / (2K).
double scale_phase(const MultiScaleLayout& layout, std::size_t k);

// 2D sinusoidal code over normalized coordinates u = row/h, v = col/w.
// The first d/2 channels encode u, the rest v; channel pair i uses frequency
// 10000^(-i/(d/4)) and carries (sin, cos) of freq * coord + phase_k.
// Throws OutOfGridError.
std::vector<double> position_encoding(const MultiScaleLayout& layout, std::size_t k, std::size_t row, std::size_t col);

enum class SlotKind : std::uint8_t { Start, Slot, End };

struct SequenceEntry {
    SlotKind kind = SlotKind::Slot;
    std::size_t scale = 0;
    GridPos pos;                    // Slot only
    std::uint32_t id = 0;
    std::vector<double> encoding;   // Slot only; markers carry none
};

std::vector<SequenceEntry> emit_sequence(const MultiScaleLayout& layout);

struct ScaleSegment {
    std::size_t scale = 0;
    std::vector<GridPos> slots;
    friend bool operator==(const ScaleSegment&, const ScaleSegment&) = default;
};

// Inverse of emit_sequence on the id stream. Throws LengthError,
// MarkerMismatchError.
std::vector<ScaleSegment> parse_sequence(const MultiScaleLayout& layout, std::span<const std::uint32_t> ids);
std::vector<ScaleSegment> parse_sequence(const MultiScaleLayout& layout, std::span<const SequenceEntry> seq);

// Seeded uniform(-0.1, 0.1) stand-ins for the learnable query and marker
// vectors, one row per sequence position (total_len x d).
FeatureMatrix query_embeddings(const MultiScaleLayout& layout, std::uint64_t seed);

// Mean squared error over all n*d elements. Throws ShapeMismatchError.
double alignment_loss(const FeatureMatrix& a, const FeatureMatrix& b);
// dL/da = 2 (a - b) / (n d).
FeatureMatrix alignment_grad(const FeatureMatrix& a, const FeatureMatrix& b);

// {"d": n, "scales": [[w, h], ...]}
MultiScaleLayout layout_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const SequenceEntry& entry);

}  // namespace omni
