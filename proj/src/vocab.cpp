#include "omni/vocab.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "omni/errors.hpp"
#include "omni/json_io.hpp"

namespace omni {

namespace {

constexpr std::array<std::string_view, kControlRoleCount> kRoleNames = {
    "BOS", "EOS", "IMG_START", "IMG_END", "AUD_START", "AUD_END", "PAD",
};

struct Interval {
    TokenId start;
    TokenId end;
    std::string what;
};

}  // namespace

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::Text: return "text";
        case Modality::Image: return "image";
        case Modality::Audio: return "audio";
        case Modality::Control: return "control";
    }
    return "?";
}

std::string_view to_string(ControlRole r) { return kRoleNames[static_cast<std::size_t>(r)]; }

std::optional<ControlRole> control_role_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
        if (kRoleNames[i] == name) return static_cast<ControlRole>(i);
    }
    return std::nullopt;
}

VocabPartition::VocabPartition(PartitionSpec spec) : spec_(std::move(spec)) {
    control_ids_.fill(static_cast<TokenId>(spec_.total_size));
    for (const auto& [role, id] : spec_.control) control_ids_[static_cast<std::size_t>(role)] = id;
}

VocabPartition VocabPartition::build(const PartitionSpec& spec) {
    const std::pair<const char*, const TokenRange*> ranges[] = {
        {"text", &spec.text}, {"image", &spec.image}, {"audio", &spec.audio}};

    std::vector<Interval> parts;
    for (const auto& [name, r] : ranges) {
        if (r->start >= r->end) {
            throw EmptyRangeError(std::string(name) + " range [" + std::to_string(r->start) + "," +
                                  std::to_string(r->end) + ") is empty");
        }
        parts.push_back({r->start, r->end, std::string(name) + " range"});
    }
    for (const auto role : kRequiredControlRoles) {
        if (!spec.control.contains(role)) {
            throw MissingControlError("control token " + std::string(to_string(role)) + " not declared");
        }
    }
    for (const auto& [role, id] : spec.control) {
        parts.push_back({id, id + 1, "control " + std::string(to_string(role))});
    }

    std::sort(parts.begin(), parts.end(), [](const Interval& a, const Interval& b) {
        return a.start < b.start || (a.start == b.start && a.end < b.end);
    });
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].start < parts[i - 1].end) {
            throw OverlapError(parts[i - 1].what + " intersects " + parts[i].what);
        }
    }

    TokenId cursor = 0;
    for (const auto& p : parts) {
        if (p.start != cursor) {
            throw GapError("ids [" + std::to_string(cursor) + "," + std::to_string(p.start) + ") are unclassified");
        }
        cursor = p.end;
    }
    if (cursor != spec.total_size) {
        if (cursor > spec.total_size) {
            throw GapError("declared ids extend to " + std::to_string(cursor) + " beyond total_size " +
                           std::to_string(spec.total_size));
        }
        throw GapError("ids [" + std::to_string(cursor) + "," + std::to_string(spec.total_size) +
                       ") are unclassified");
    }
    return VocabPartition(spec);
}

ModalityClass VocabPartition::classify(TokenId token) const {
    if (token >= spec_.total_size) {
        throw OutOfVocabError("token " + std::to_string(token) + " >= vocabulary size " +
                              std::to_string(spec_.total_size));
    }
    if (spec_.text.contains(token)) return ModalityClass::text();
    if (spec_.image.contains(token)) return ModalityClass::image();
    if (spec_.audio.contains(token)) return ModalityClass::audio();
    for (std::size_t i = 0; i < control_ids_.size(); ++i) {
        if (control_ids_[i] == token) return ModalityClass::control(static_cast<ControlRole>(i));
    }
    // Unreachable for a validated partition.
    throw OutOfVocabError("token " + std::to_string(token) + " is unclassified");
}

const TokenRange& VocabPartition::range(Modality m) const {
    switch (m) {
        case Modality::Text: return spec_.text;
        case Modality::Image: return spec_.image;
        case Modality::Audio: return spec_.audio;
        case Modality::Control: break;
    }
    throw PreconditionError("control tokens do not form a range");
}

TokenId VocabPartition::control_id(ControlRole role) const {
    const auto id = find_control(role);
    if (!id) throw MissingControlError("control token " + std::string(to_string(role)) + " not declared");
    return *id;
}

std::optional<TokenId> VocabPartition::find_control(ControlRole role) const {
    const TokenId id = control_ids_[static_cast<std::size_t>(role)];
    if (id >= spec_.total_size) return std::nullopt;
    return id;
}

PartitionSpec reference_partition_spec() {
    PartitionSpec spec;
    spec.total_size = 774;
    spec.text = {0, 256};
    spec.image = {256, 512};
    spec.audio = {512, 768};
    spec.control = {
        {ControlRole::Bos, 768},    {ControlRole::Eos, 769},      {ControlRole::ImgStart, 770},
        {ControlRole::ImgEnd, 771}, {ControlRole::AudStart, 772}, {ControlRole::AudEnd, 773},
    };
    return spec;
}

PartitionSpec partition_spec_from_json(const nlohmann::json& j) {
    PartitionSpec spec;
    spec.total_size = json_get<std::size_t>(j, "total_size");
    const auto ranges = json_get<nlohmann::json>(j, "ranges");
    auto read_range = [&](const char* name) {
        const auto pair = json_get<std::vector<TokenId>>(ranges, name);
        if (pair.size() != 2) throw ConfigError(std::string("range \"") + name + "\" must be [start, end]");
        return TokenRange{pair[0], pair[1]};
    };
    spec.text = read_range("text");
    spec.image = read_range("image");
    spec.audio = read_range("audio");

    const auto control = json_get<nlohmann::json>(j, "control");
    if (!control.is_object()) throw ConfigError("\"control\" must be an object");
    for (const auto& [name, value] : control.items()) {
        const auto role = control_role_from_string(name);
        if (!role) throw ConfigError("unknown control role \"" + name + "\"");
        if (!value.is_number_unsigned()) throw ConfigError("control id for " + name + " must be a non-negative integer");
        spec.control[*role] = value.get<TokenId>();
    }
    return spec;
}

nlohmann::json to_json(const PartitionSpec& spec) {
    nlohmann::ordered_json control = nlohmann::ordered_json::object();
    for (const auto& [role, id] : spec.control) control[std::string(to_string(role))] = id;
    nlohmann::ordered_json j;
    j["total_size"] = spec.total_size;
    j["ranges"] = {
        {"text", {spec.text.start, spec.text.end}},
        {"image", {spec.image.start, spec.image.end}},
        {"audio", {spec.audio.start, spec.audio.end}},
    };
    j["control"] = control;
    return nlohmann::json(j);
}

VocabPartition load_partition(const std::filesystem::path& path) {
    return VocabPartition::build(partition_spec_from_json(read_json_file(path)));
}

VocabPartition resolve_partition(const nlohmann::json& ref, const std::filesystem::path& base_dir) {
    if (ref.is_string()) {
        std::filesystem::path path = ref.get<std::string>();
        if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
        return load_partition(path);
    }
    if (ref.is_object()) return VocabPartition::build(partition_spec_from_json(ref));
    throw ConfigError("partition must be a path or an object");
}

}  // namespace omni
