#pragma once

/**
 * Mixed-modal decoding state machine.
 *
 *   Text ──IMG_START──▶ ImageBlock{block_size} ──(block_size image tokens)──▶ [forced IMG_END] ──▶ Text
 *   Text ──AUD_START──▶ Audio ──AUD_END──▶ Text
 *   Text ──EOS──▶ Finished
 *
 * Every step emits exactly one GenEvent and appends exactly one token to the
 * context. Sampled tokens consume one RNG draw each; forced tokens (IMG_END
 * after a full block, the implicit opener of ImageOnly/AudioOnly sessions,
 * the Eos emitted at the max_tokens cutoff, AUD_END at the audio cap) consume
 * none.
 *
 * Two execution paths produce token-identical traces:
 *
 *   run_streaming  step() at a time; every sampled token is inspected on the
 *                  host, including image-block interiors.
 *   run_fused      image-block interiors come from the backend's block cursor
 *                  without inspection; text and audio tokens are still
 *                  inspected because they drive the mode transitions.
 *
 * An image block, once opened, always runs to completion; max_tokens is
 * enforced only at Text/Audio steps.
 */

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omni/audio_bpe.hpp"
#include "omni/backend.hpp"
#include "omni/constraint.hpp"
#include "omni/sampler.hpp"
#include "omni/vocab.hpp"

namespace omni {

enum class GenerationPolicy : std::uint8_t { FreeInterleave, TextOnly, ImageOnly, AudioOnly };

std::string_view to_string(GenerationPolicy p);
std::optional<GenerationPolicy> generation_policy_from_string(std::string_view name);

enum class ModeKind : std::uint8_t { Text, ImageBlock, Audio, Finished };

struct DecoderMode {
    ModeKind kind = ModeKind::Text;
    std::size_t remaining = 0;  // ImageBlock only

    friend bool operator==(const DecoderMode&, const DecoderMode&) = default;
};

inline constexpr std::size_t kDefaultBlockSize = 1024;
inline constexpr std::size_t kDefaultMaxAudioTokens = 4096;

struct SessionConfig {
    std::shared_ptr<const VocabPartition> partition;
    std::size_t block_size = kDefaultBlockSize;
    std::size_t max_tokens = 4096;
    GenerationPolicy policy = GenerationPolicy::FreeInterleave;
    SamplingParams sampling;
    std::uint64_t seed = 0;
    std::size_t max_audio_tokens = kDefaultMaxAudioTokens;
    // When set, audio-range position p is BPE symbol p and completed segments
    // are decoded to raw audio tokens. Otherwise positions pass through.
    std::shared_ptr<const BpeCodec> audio_codec;
    // Opaque upstream state handed to the backend with every query.
    std::string conditioning;
    // Optional shared mask cache; a private one is created when null.
    std::shared_ptr<MaskCache> masks;

    // Throws PreconditionError.
    void validate() const;
};

enum class EventKind : std::uint8_t {
    TextToken,
    ImageBlockStart,
    ImageToken,
    ImageBlockComplete,
    AudioSegmentStart,
    AudioToken,
    AudioSegmentComplete,
    Eos,
};

std::string_view to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(std::string_view name);

struct GenEvent {
    EventKind kind = EventKind::TextToken;
    std::size_t step = 0;               // 1-based
    ModeKind mode = ModeKind::Text;     // mode when the step began
    TokenId token = 0;                  // token appended to the context
    bool inspected = false;             // classified on the host
    bool sampled = false;               // consumed an RNG draw
    std::size_t index = 0;              // ImageToken: position inside the block
    std::vector<TokenId> raw_tokens;    // AudioSegmentComplete: decoded segment

    // Compares everything except `inspected`, which is path dependent.
    bool same_generation(const GenEvent& other) const;
};

struct TraceCounters {
    std::uint64_t steps = 0;
    std::uint64_t inspections = 0;
    std::uint64_t blocks = 0;
    std::uint64_t rng_draws = 0;

    friend bool operator==(const TraceCounters&, const TraceCounters&) = default;
};

struct Trace {
    std::vector<GenEvent> events;
    TraceCounters counters;

    std::vector<TokenId> tokens() const;
    // Recomputes counters from the event list.
    static TraceCounters count(std::span<const GenEvent> events);
};

class Session {
public:
    // Throws InvalidPromptError, PreconditionError. `backend` must outlive the
    // session.
    Session(SessionConfig config, const Backend& backend, std::span<const TokenId> prompt);

    Session(Session&&) = default;
    Session& operator=(Session&&) = delete;
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    // One streaming step. Throws SessionFinishedError.
    GenEvent step();

    DecoderMode mode() const { return mode_; }
    bool finished() const { return mode_.kind == ModeKind::Finished; }
    bool fresh() const { return trace_.events.empty(); }
    const std::vector<TokenId>& context() const { return context_; }
    const Trace& trace() const { return trace_; }
    const SessionConfig& config() const { return config_; }
    std::uint64_t rng_draws() const { return rng_.draws(); }

private:
    friend Trace run_fused(Session& session);

    const GenEvent& emit(GenEvent ev);
    TokenId draw(std::span<const double> logits, const LogitMask& mask);
    const GenEvent& step_text();
    const GenEvent& step_image();
    const GenEvent& step_audio();
    const GenEvent& forced(EventKind kind, TokenId token);
    void fuse_block();
    bool at_token_limit() const { return trace_.events.size() + 1 >= config_.max_tokens; }

    SessionConfig config_;
    const Backend& backend_;
    const VocabPartition& vocab_;
    RngStream rng_;
    DecoderMode mode_;
    std::optional<EventKind> pending_open_;
    std::vector<TokenId> context_;
    std::vector<TokenId> audio_segment_;
    Trace trace_;

    std::shared_ptr<const LogitMask> text_mask_;
    std::shared_ptr<const LogitMask> image_mask_;
    std::shared_ptr<const LogitMask> audio_mask_;
};

inline Session open_session(SessionConfig config, const Backend& backend, std::span<const TokenId> prompt) {
    return Session(std::move(config), backend, prompt);
}

// Both require a fresh session (PreconditionError otherwise) and run it to
// Finished.
Trace run_streaming(Session& session);
Trace run_streaming(Session& session, const std::function<void(const GenEvent&)>& on_event);
Trace run_fused(Session& session);

// Mask applied to Text-mode steps under a policy.
ModalityConstraint text_mode_constraint(GenerationPolicy policy);

// Drops events whose token class is not permitted; counters are recomputed.
Trace filter_trace(const Trace& trace, const VocabPartition& partition, const ModalityConstraint& constraint);

// One JSON object per event, then {"summary": {...}}.
void write_trace_jsonl(std::ostream& out, const Trace& trace);
std::string trace_to_jsonl(const Trace& trace);
Trace read_trace_jsonl(std::istream& in);

}  // namespace omni
