#pragma once

/**
 * Partitioned unified token space.
 *
 * The vocabulary is split into three contiguous modality ranges (text, image,
 * audio) plus a handful of single-id control tokens. Together they must tile
 * [0, total_size) exactly, which makes classification total and O(1).
 *
 * A VocabPartition is immutable once built and may be shared across threads.
 */

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string_view>

#include "json.hpp"

namespace omni {

using TokenId = std::uint32_t;

// Half-open [start, end).
struct TokenRange {
    TokenId start = 0;
    TokenId end = 0;

    constexpr std::size_t size() const { return end > start ? end - start : 0; }
    constexpr bool contains(TokenId id) const { return id >= start && id < end; }
    friend constexpr bool operator==(const TokenRange&, const TokenRange&) = default;
};

enum class Modality : std::uint8_t { Text, Image, Audio, Control };

enum class ControlRole : std::uint8_t { Bos, Eos, ImgStart, ImgEnd, AudStart, AudEnd, Pad };

inline constexpr std::size_t kControlRoleCount = 7;
inline constexpr std::array<ControlRole, 6> kRequiredControlRoles = {
    ControlRole::Bos,    ControlRole::Eos,      ControlRole::ImgStart,
    ControlRole::ImgEnd, ControlRole::AudStart, ControlRole::AudEnd,
};

std::string_view to_string(Modality m);
std::string_view to_string(ControlRole r);
std::optional<ControlRole> control_role_from_string(std::string_view name);

// Class of a single token id. `role` is only meaningful for Control.
struct ModalityClass {
    Modality modality = Modality::Text;
    ControlRole role = ControlRole::Bos;

    static constexpr ModalityClass text() { return {Modality::Text, {}}; }
    static constexpr ModalityClass image() { return {Modality::Image, {}}; }
    static constexpr ModalityClass audio() { return {Modality::Audio, {}}; }
    static constexpr ModalityClass control(ControlRole r) { return {Modality::Control, r}; }

    friend constexpr bool operator==(const ModalityClass& a, const ModalityClass& b) {
        return a.modality == b.modality && (a.modality != Modality::Control || a.role == b.role);
    }
};

// Declarative description, as read from a partition file.
struct PartitionSpec {
    std::size_t total_size = 0;
    TokenRange text;
    TokenRange image;
    TokenRange audio;
    std::map<ControlRole, TokenId> control;
};

class VocabPartition {
public:
    // Throws EmptyRangeError, OverlapError, GapError, MissingControlError.
    static VocabPartition build(const PartitionSpec& spec);

    ModalityClass classify(TokenId token) const;

    std::size_t total_size() const { return spec_.total_size; }
    const TokenRange& range(Modality m) const;
    TokenId control_id(ControlRole role) const;
    std::optional<TokenId> find_control(ControlRole role) const;
    const PartitionSpec& spec() const { return spec_; }

private:
    explicit VocabPartition(PartitionSpec spec);

    PartitionSpec spec_;
    // Indexed by ControlRole; total_size marks an absent role.
    std::array<TokenId, kControlRoleCount> control_ids_{};
};

inline VocabPartition build_partition(const PartitionSpec& spec) { return VocabPartition::build(spec); }
inline ModalityClass classify(const VocabPartition& p, TokenId token) { return p.classify(token); }

// text=[0,256) image=[256,512) audio=[512,768), controls 768..773, total 774.
PartitionSpec reference_partition_spec();

// {"total_size": N, "ranges": {"text": [s,e], ...}, "control": {"BOS": id, ...}}
PartitionSpec partition_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PartitionSpec& spec);
VocabPartition load_partition(const std::filesystem::path& path);
// `ref` is either an inline partition object or a path string, resolved
// against `base_dir` when relative.
VocabPartition resolve_partition(const nlohmann::json& ref, const std::filesystem::path& base_dir);

}  // namespace omni
