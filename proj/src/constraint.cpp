#include "omni/constraint.hpp"

#include <algorithm>
#include <string>

#include "omni/errors.hpp"

namespace omni {

namespace {

constexpr std::uint8_t bit(Modality m) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(m)); }
constexpr std::uint16_t bit(ControlRole r) { return static_cast<std::uint16_t>(1u << static_cast<unsigned>(r)); }

}  // namespace

ModalityConstraint ModalityConstraint::of(std::initializer_list<Modality> modalities,
                                          std::initializer_list<ControlRole> roles) {
    ModalityConstraint c;
    for (const auto m : modalities) c.allow(m);
    for (const auto r : roles) c.allow(r);
    return c;
}

ModalityConstraint ModalityConstraint::everything() {
    ModalityConstraint c;
    c.allow(Modality::Text).allow(Modality::Image).allow(Modality::Audio).allow(Modality::Control);
    return c;
}

ModalityConstraint& ModalityConstraint::allow(Modality m) {
    if (m == Modality::Control) {
        role_bits_ = static_cast<std::uint16_t>((1u << kControlRoleCount) - 1);
    } else {
        modality_bits_ |= bit(m);
    }
    return *this;
}

ModalityConstraint& ModalityConstraint::allow(ControlRole r) {
    role_bits_ |= bit(r);
    return *this;
}

ModalityConstraint& ModalityConstraint::limit_audio(std::size_t count) {
    audio_limit_ = static_cast<std::uint32_t>(count);
    return *this;
}

bool ModalityConstraint::permits(const ModalityClass& cls) const {
    if (cls.modality == Modality::Control) return (role_bits_ & bit(cls.role)) != 0;
    return (modality_bits_ & bit(cls.modality)) != 0;
}

bool ModalityConstraint::permits(const VocabPartition& partition, TokenId token) const {
    const auto cls = partition.classify(token);
    if (!permits(cls)) return false;
    if (cls.modality == Modality::Audio && audio_limit_) {
        return token - partition.range(Modality::Audio).start < *audio_limit_;
    }
    return true;
}

std::uint64_t ModalityConstraint::key() const {
    std::uint64_t k = modality_bits_ | (static_cast<std::uint64_t>(role_bits_) << 8);
    if (audio_limit_) k |= (static_cast<std::uint64_t>(*audio_limit_) + 1) << 24;
    return k;
}

LogitMask mask_for(const VocabPartition& partition, const ModalityConstraint& constraint) {
    LogitMask mask;
    mask.offsets.assign(partition.total_size(), kNegInf);
    for (TokenId id = 0; id < partition.total_size(); ++id) {
        if (constraint.permits(partition, id)) {
            mask.offsets[id] = 0.0;
            ++mask.allowed_count;
        }
    }
    if (mask.allowed_count == 0) throw EmptyConstraintError("constraint allows no token id");
    return mask;
}

LogitVector apply_mask(std::span<const double> logits, const LogitMask& mask) {
    if (logits.size() != mask.size()) {
        throw LengthMismatchError("logits length " + std::to_string(logits.size()) + " != mask length " +
                                  std::to_string(mask.size()));
    }
    LogitVector out(logits.size());
    std::transform(logits.begin(), logits.end(), mask.offsets.begin(), out.begin(), saturating_add);
    return out;
}

MaskCache::MaskCache(std::shared_ptr<const VocabPartition> partition) : partition_(std::move(partition)) {}

std::shared_ptr<const LogitMask> MaskCache::get(const ModalityConstraint& constraint) {
    const auto key = constraint.key();
    {
        std::lock_guard lock(mutex_);
        if (auto it = masks_.find(key); it != masks_.end()) return it->second;
    }
    // Built outside the lock; the first inserted instance wins.
    auto built = std::make_shared<const LogitMask>(mask_for(*partition_, constraint));
    std::lock_guard lock(mutex_);
    return masks_.try_emplace(key, std::move(built)).first->second;
}

std::size_t MaskCache::size() const {
    std::lock_guard lock(mutex_);
    return masks_.size();
}

}  // namespace omni
