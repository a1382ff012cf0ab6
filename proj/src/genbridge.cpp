#include "omni/genbridge.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "omni/errors.hpp"
#include "omni/json_io.hpp"

namespace omni {

MultiScaleLayout MultiScaleLayout::build(std::span<const std::pair<std::size_t, std::size_t>> scales, std::size_t d) {
    if (scales.empty()) throw EmptyScaleListError("layout needs at least one scale");
    if (d == 0 || d % 4 != 0) throw PreconditionError("hidden dimension must be a positive multiple of 4");

    MultiScaleLayout layout;
    layout.d_ = d;
    for (std::size_t k = 0; k < scales.size(); ++k) {
        const auto [w, h] = scales[k];
        if (w == 0 || h == 0) throw PreconditionError("scale " + std::to_string(k) + " has an empty grid");
        const ScaleSpec spec{w, h};
        if (k > 0 && spec.slots() <= layout.scales_.back().slots()) {
            throw NonIncreasingScalesError("scale " + std::to_string(k) + " (" + std::to_string(w) + "x" +
                                           std::to_string(h) + ") is not larger than the previous scale");
        }
        layout.offsets_.push_back(layout.total_slots_);
        layout.scales_.push_back(spec);
        layout.total_slots_ += spec.slots();
        layout.total_len_ += spec.slots() + 2;
    }
    return layout;
}

std::uint32_t MultiScaleLayout::start_id(std::size_t k) const {
    return static_cast<std::uint32_t>(total_slots_ + 2 * k);
}

std::uint32_t MultiScaleLayout::end_id(std::size_t k) const {
    return static_cast<std::uint32_t>(total_slots_ + 2 * k + 1);
}

std::uint32_t MultiScaleLayout::slot_id(std::size_t k, GridPos pos) const {
    const auto& s = scales_.at(k);
    return static_cast<std::uint32_t>(offsets_[k] + pos.row * s.width + pos.col);
}

double scale_phase(const MultiScaleLayout& layout, std::size_t k) {
    return static_cast<double>(k + 1) * std::numbers::pi / (2.0 * static_cast<double>(layout.scale_count()));
}

std::vector<double> position_encoding(const MultiScaleLayout& layout, std::size_t k, std::size_t row, std::size_t col) {
    if (k >= layout.scale_count()) throw OutOfGridError("scale index " + std::to_string(k) + " out of range");
    const auto& s = layout.scale(k);
    if (row >= s.height || col >= s.width) {
        throw OutOfGridError("(" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                             std::to_string(s.width) + "x" + std::to_string(s.height) + " grid");
    }
    const std::size_t d = layout.dim();
    const std::size_t pairs = d / 4;
    const double phase = scale_phase(layout, k);
    const double coords[2] = {static_cast<double>(row) / static_cast<double>(s.height),
                              static_cast<double>(col) / static_cast<double>(s.width)};

    std::vector<double> enc(d);
    for (std::size_t axis = 0; axis < 2; ++axis) {
        for (std::size_t i = 0; i < pairs; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(pairs));
            const double angle = freq * coords[axis] + phase;
            enc[axis * (d / 2) + 2 * i] = std::sin(angle);
            enc[axis * (d / 2) + 2 * i + 1] = std::cos(angle);
        }
    }
    return enc;
}

std::vector<SequenceEntry> emit_sequence(const MultiScaleLayout& layout) {
    std::vector<SequenceEntry> seq;
    seq.reserve(layout.total_len());
    for (std::size_t k = 0; k < layout.scale_count(); ++k) {
        const auto& s = layout.scale(k);
        seq.push_back({SlotKind::Start, k, {}, layout.start_id(k), {}});
        for (std::size_t r = 0; r < s.height; ++r) {
            for (std::size_t c = 0; c < s.width; ++c) {
                seq.push_back({SlotKind::Slot, k, {r, c}, layout.slot_id(k, {r, c}), position_encoding(layout, k, r, c)});
            }
        }
        seq.push_back({SlotKind::End, k, {}, layout.end_id(k), {}});
    }
    return seq;
}

std::vector<ScaleSegment> parse_sequence(const MultiScaleLayout& layout, std::span<const std::uint32_t> ids) {
    if (ids.size() != layout.total_len()) {
        throw LengthError("sequence has " + std::to_string(ids.size()) + " entries, layout expects " +
                          std::to_string(layout.total_len()));
    }
    const auto is_marker = [&](std::uint32_t id) { return id >= layout.total_slots(); };

    std::vector<ScaleSegment> out;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < layout.scale_count(); ++k) {
        const auto& s = layout.scale(k);
        if (ids[pos] != layout.start_id(k)) {
            throw MarkerMismatchError("position " + std::to_string(pos) + ": expected start marker of scale " +
                                      std::to_string(k));
        }
        ++pos;
        ScaleSegment seg{k, {}};
        const std::size_t first = layout.slot_offset(k);
        for (std::size_t i = 0; i < s.slots(); ++i, ++pos) {
            const auto id = ids[pos];
            if (is_marker(id)) {
                throw LengthError("scale " + std::to_string(k) + " segment holds " + std::to_string(i) +
                                  " slots, expected " + std::to_string(s.slots()));
            }
            if (id < first || id >= first + s.slots()) {
                throw MarkerMismatchError("position " + std::to_string(pos) + ": slot " + std::to_string(id) +
                                          " does not belong to scale " + std::to_string(k));
            }
            const std::size_t local = id - first;
            seg.slots.push_back({local / s.width, local % s.width});
        }
        if (ids[pos] != layout.end_id(k)) {
            if (!is_marker(ids[pos])) throw LengthError("scale " + std::to_string(k) + " segment is too long");
            throw MarkerMismatchError("position " + std::to_string(pos) + ": expected end marker of scale " +
                                      std::to_string(k));
        }
        ++pos;
        out.push_back(std::move(seg));
    }
    return out;
}

std::vector<ScaleSegment> parse_sequence(const MultiScaleLayout& layout, std::span<const SequenceEntry> seq) {
    std::vector<std::uint32_t> ids;
    ids.reserve(seq.size());
    for (const auto& e : seq) ids.push_back(e.id);
    return parse_sequence(layout, ids);
}

FeatureMatrix query_embeddings(const MultiScaleLayout& layout, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    FeatureMatrix m(layout.total_len(), layout.dim());
    for (auto& v : m.data) v = -0.1 + 0.2 * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
    return m;
}

namespace {

void check_same_shape(const FeatureMatrix& a, const FeatureMatrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw ShapeMismatchError(std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                                 std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    if (a.data.size() != a.rows * a.cols || b.data.size() != b.rows * b.cols) {
        throw ShapeMismatchError("matrix storage does not match its shape");
    }
    if (a.data.empty()) throw ShapeMismatchError("feature matrices must be non-empty");
}

}  // namespace

double alignment_loss(const FeatureMatrix& a, const FeatureMatrix& b) {
    check_same_shape(a, b);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double diff = a.data[i] - b.data[i];
        sum += diff * diff;
    }
    return sum / static_cast<double>(a.data.size());
}

FeatureMatrix alignment_grad(const FeatureMatrix& a, const FeatureMatrix& b) {
    check_same_shape(a, b);
    FeatureMatrix g(a.rows, a.cols);
    const double scale = 2.0 / static_cast<double>(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) g.data[i] = scale * (a.data[i] - b.data[i]);
    return g;
}

MultiScaleLayout layout_from_json(const nlohmann::json& j) {
    const auto d = json_get<std::size_t>(j, "d");
    const auto scales = json_get<std::vector<std::pair<std::size_t, std::size_t>>>(j, "scales");
    return MultiScaleLayout::build(scales, d);
}

nlohmann::ordered_json to_json(const SequenceEntry& e) {
    nlohmann::ordered_json j;
    j["kind"] = e.kind == SlotKind::Start ? "start" : e.kind == SlotKind::End ? "end" : "slot";
    j["scale"] = e.scale;
    j["id"] = e.id;
    if (e.kind == SlotKind::Slot) {
        j["row"] = e.pos.row;
        j["col"] = e.pos.col;
        j["encoding"] = e.encoding;
    }
    return j;
}

}  // namespace omni
