#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "omni/vocab.hpp"

namespace omni {

// Most negative finite double. Masked logits saturate here instead of
// reaching IEEE -inf, so arithmetic on masked vectors stays total.
inline constexpr double kNegInf = std::numeric_limits<double>::lowest();

using LogitVector = std::vector<double>;

inline double saturating_add(double a, double b) { return std::max(a + b, kNegInf); }

// Set of permitted modalities and control roles.
class ModalityConstraint {
public:
    ModalityConstraint() = default;

    static ModalityConstraint of(std::initializer_list<Modality> modalities,
                                 std::initializer_list<ControlRole> roles = {});
    // Every modality and every control role.
    static ModalityConstraint everything();

    ModalityConstraint& allow(Modality m);
    ModalityConstraint& allow(ControlRole r);
    // Only the first `count` ids of the audio range stay allowed.
    ModalityConstraint& limit_audio(std::size_t count);

    bool permits(const ModalityClass& cls) const;
    bool permits(const VocabPartition& partition, TokenId token) const;
    bool empty() const { return modality_bits_ == 0 && role_bits_ == 0; }
    std::uint64_t key() const;

private:
    std::uint8_t modality_bits_ = 0;
    std::uint16_t role_bits_ = 0;
    std::optional<std::uint32_t> audio_limit_;
};

struct LogitMask {
    std::vector<double> offsets;  // 0 allowed, kNegInf disallowed
    std::size_t allowed_count = 0;

    std::size_t size() const { return offsets.size(); }
    bool allows(TokenId id) const { return offsets[id] == 0.0; }
};

// Throws EmptyConstraintError when no id survives.
LogitMask mask_for(const VocabPartition& partition, const ModalityConstraint& constraint);

// out[i] = logits[i] (+) offsets[i], saturating. Throws LengthMismatchError.
LogitVector apply_mask(std::span<const double> logits, const LogitMask& mask);

// Masks built once per constraint; concurrent get() calls are safe and
// observe the same instance.
class MaskCache {
public:
    explicit MaskCache(std::shared_ptr<const VocabPartition> partition);

    std::shared_ptr<const LogitMask> get(const ModalityConstraint& constraint);
    std::size_t size() const;
    const VocabPartition& partition() const { return *partition_; }

private:
    std::shared_ptr<const VocabPartition> partition_;
    mutable std::mutex mutex_;
    std::unordered_map<std::uint64_t, std::shared_ptr<const LogitMask>> masks_;
};

}  // namespace omni
