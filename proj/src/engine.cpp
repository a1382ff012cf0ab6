#include "omni/engine.hpp"

#include <array>
#include <string>

#include "omni/errors.hpp"

namespace omni {

namespace {

constexpr std::array<std::string_view, 4> kPolicyNames = {"free_interleave", "text_only", "image_only", "audio_only"};

constexpr std::array<std::string_view, 8> kEventNames = {
    "text_token",  "image_block_start",      "image_token", "image_block_complete", "audio_segment_start",
    "audio_token", "audio_segment_complete", "eos",
};

void validate_prompt(const VocabPartition& vocab, std::span<const TokenId> prompt, std::size_t block_size) {
    enum class State { Outside, InImage, InAudio } state = State::Outside;
    std::size_t image_count = 0;
    for (std::size_t pos = 0; pos < prompt.size(); ++pos) {
        const TokenId tok = prompt[pos];
        auto fail = [&](const std::string& why) {
            throw InvalidPromptError("prompt position " + std::to_string(pos) + " (token " + std::to_string(tok) +
                                     "): " + why);
        };
        if (tok >= vocab.total_size()) fail("out of vocabulary");
        const auto cls = vocab.classify(tok);
        switch (state) {
            case State::Outside:
                if (cls == ModalityClass::control(ControlRole::ImgStart)) {
                    state = State::InImage;
                    image_count = 0;
                } else if (cls == ModalityClass::control(ControlRole::AudStart)) {
                    state = State::InAudio;
                } else if (cls.modality == Modality::Image || cls == ModalityClass::control(ControlRole::ImgEnd)) {
                    fail("image token outside an image block");
                } else if (cls.modality == Modality::Audio || cls == ModalityClass::control(ControlRole::AudEnd)) {
                    fail("audio token outside an audio segment");
                }
                break;
            case State::InImage:
                if (cls.modality == Modality::Image) {
                    if (++image_count > block_size) fail("image block longer than block_size");
                } else if (cls == ModalityClass::control(ControlRole::ImgEnd)) {
                    if (image_count != block_size) {
                        fail("image block holds " + std::to_string(image_count) + " tokens, expected " +
                             std::to_string(block_size));
                    }
                    state = State::Outside;
                } else {
                    fail("non-image token inside an image block");
                }
                break;
            case State::InAudio:
                if (cls == ModalityClass::control(ControlRole::AudEnd)) {
                    state = State::Outside;
                } else if (cls.modality != Modality::Audio) {
                    fail("non-audio token inside an audio segment");
                }
                break;
        }
    }
    if (state == State::InImage) throw InvalidPromptError("prompt ends inside an image block");
    if (state == State::InAudio) throw InvalidPromptError("prompt ends inside an audio segment");
}

}  // namespace

std::string_view to_string(GenerationPolicy p) { return kPolicyNames[static_cast<std::size_t>(p)]; }

std::optional<GenerationPolicy> generation_policy_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kPolicyNames.size(); ++i) {
        if (kPolicyNames[i] == name) return static_cast<GenerationPolicy>(i);
    }
    return std::nullopt;
}

std::string_view to_string(EventKind k) { return kEventNames[static_cast<std::size_t>(k)]; }

std::optional<EventKind> event_kind_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kEventNames.size(); ++i) {
        if (kEventNames[i] == name) return static_cast<EventKind>(i);
    }
    return std::nullopt;
}

bool GenEvent::same_generation(const GenEvent& o) const {
    return kind == o.kind && step == o.step && mode == o.mode && token == o.token && sampled == o.sampled &&
           index == o.index && raw_tokens == o.raw_tokens;
}

void SessionConfig::validate() const {
    if (!partition) throw PreconditionError("session config has no partition");
    if (block_size < 1) throw PreconditionError("block_size must be >= 1");
    if (max_tokens < 1) throw PreconditionError("max_tokens must be >= 1");
    if (max_audio_tokens < 1) throw PreconditionError("max_audio_tokens must be >= 1");
    sampling.validate();
    if (audio_codec && audio_codec->symbol_count() > partition->range(Modality::Audio).size()) {
        throw PreconditionError("audio codec has " + std::to_string(audio_codec->symbol_count()) +
                                " symbols but the audio range holds " +
                                std::to_string(partition->range(Modality::Audio).size()));
    }
}

std::vector<TokenId> Trace::tokens() const {
    std::vector<TokenId> out;
    out.reserve(events.size());
    for (const auto& e : events) out.push_back(e.token);
    return out;
}

TraceCounters Trace::count(std::span<const GenEvent> events) {
    TraceCounters c;
    c.steps = events.size();
    for (const auto& e : events) {
        c.inspections += e.inspected ? 1 : 0;
        c.rng_draws += e.sampled ? 1 : 0;
        c.blocks += e.kind == EventKind::ImageBlockComplete ? 1 : 0;
    }
    return c;
}

ModalityConstraint text_mode_constraint(GenerationPolicy policy) {
    switch (policy) {
        case GenerationPolicy::FreeInterleave:
            return ModalityConstraint::of({Modality::Text},
                                          {ControlRole::Eos, ControlRole::ImgStart, ControlRole::AudStart});
        case GenerationPolicy::TextOnly: return ModalityConstraint::of({Modality::Text}, {ControlRole::Eos});
        case GenerationPolicy::ImageOnly: return ModalityConstraint::of({}, {ControlRole::ImgStart, ControlRole::Eos});
        case GenerationPolicy::AudioOnly: return ModalityConstraint::of({}, {ControlRole::AudStart, ControlRole::Eos});
    }
    throw PreconditionError("unknown generation policy");
}

Session::Session(SessionConfig config, const Backend& backend, std::span<const TokenId> prompt)
    : config_(std::move(config)),
      backend_(backend),
      vocab_((config_.validate(), *config_.partition)),
      rng_(config_.seed) {
    if (backend_.vocab_size() != vocab_.total_size()) {
        throw PreconditionError("backend vocabulary size " + std::to_string(backend_.vocab_size()) +
                                " != partition size " + std::to_string(vocab_.total_size()));
    }
    validate_prompt(vocab_, prompt, config_.block_size);
    context_.assign(prompt.begin(), prompt.end());

    if (!config_.masks) config_.masks = std::make_shared<MaskCache>(config_.partition);
    auto audio = ModalityConstraint::of({Modality::Audio}, {ControlRole::AudEnd});
    if (config_.audio_codec) audio.limit_audio(config_.audio_codec->symbol_count());
    text_mask_ = config_.masks->get(text_mode_constraint(config_.policy));
    image_mask_ = config_.masks->get(ModalityConstraint::of({Modality::Image}));
    audio_mask_ = config_.masks->get(audio);

    switch (config_.policy) {
        case GenerationPolicy::FreeInterleave:
        case GenerationPolicy::TextOnly: mode_ = {ModeKind::Text, 0}; break;
        case GenerationPolicy::ImageOnly:
            mode_ = {ModeKind::ImageBlock, config_.block_size};
            pending_open_ = EventKind::ImageBlockStart;
            break;
        case GenerationPolicy::AudioOnly:
            mode_ = {ModeKind::Audio, 0};
            pending_open_ = EventKind::AudioSegmentStart;
            break;
    }
}

const GenEvent& Session::emit(GenEvent ev) {
    ev.step = trace_.events.size() + 1;
    context_.push_back(ev.token);
    auto& c = trace_.counters;
    ++c.steps;
    c.inspections += ev.inspected ? 1 : 0;
    c.rng_draws += ev.sampled ? 1 : 0;
    c.blocks += ev.kind == EventKind::ImageBlockComplete ? 1 : 0;
    trace_.events.push_back(std::move(ev));
    return trace_.events.back();
}

TokenId Session::draw(std::span<const double> logits, const LogitMask& mask) {
    return sample(logits, mask, config_.sampling, rng_);
}

const GenEvent& Session::forced(EventKind kind, TokenId token) {
    GenEvent ev;
    ev.kind = kind;
    ev.mode = mode_.kind;
    ev.token = token;
    return emit(std::move(ev));
}

GenEvent Session::step() {
    if (finished()) throw SessionFinishedError("session already finished");
    if (pending_open_) {
        const auto kind = *pending_open_;
        pending_open_.reset();
        const auto role = kind == EventKind::ImageBlockStart ? ControlRole::ImgStart : ControlRole::AudStart;
        return forced(kind, vocab_.control_id(role));
    }
    switch (mode_.kind) {
        case ModeKind::Text: return step_text();
        case ModeKind::ImageBlock: return step_image();
        case ModeKind::Audio: return step_audio();
        case ModeKind::Finished: break;
    }
    throw SessionFinishedError("session already finished");
}

const GenEvent& Session::step_text() {
    if (at_token_limit()) {
        mode_ = {ModeKind::Finished, 0};
        GenEvent ev;
        ev.kind = EventKind::Eos;
        ev.mode = ModeKind::Text;
        ev.token = vocab_.control_id(ControlRole::Eos);
        return emit(std::move(ev));
    }
    const auto logits = backend_.next_logits(ContextView(context_, config_.conditioning));
    GenEvent ev;
    ev.mode = ModeKind::Text;
    ev.token = draw(logits, *text_mask_);
    ev.sampled = true;
    ev.inspected = true;

    const auto cls = vocab_.classify(ev.token);
    if (cls == ModalityClass::control(ControlRole::ImgStart)) {
        ev.kind = EventKind::ImageBlockStart;
        mode_ = {ModeKind::ImageBlock, config_.block_size};
    } else if (cls == ModalityClass::control(ControlRole::AudStart)) {
        ev.kind = EventKind::AudioSegmentStart;
        mode_ = {ModeKind::Audio, 0};
        audio_segment_.clear();
    } else if (cls == ModalityClass::control(ControlRole::Eos)) {
        ev.kind = EventKind::Eos;
        mode_ = {ModeKind::Finished, 0};
    } else {
        ev.kind = EventKind::TextToken;
    }
    return emit(std::move(ev));
}

const GenEvent& Session::step_image() {
    if (mode_.remaining == 0) {
        const auto& ev = forced(EventKind::ImageBlockComplete, vocab_.control_id(ControlRole::ImgEnd));
        mode_ = {ModeKind::Text, 0};
        return ev;
    }
    const auto logits = backend_.next_logits(ContextView(context_, config_.conditioning));
    GenEvent ev;
    ev.kind = EventKind::ImageToken;
    ev.mode = ModeKind::ImageBlock;
    ev.token = draw(logits, *image_mask_);
    ev.sampled = true;
    ev.inspected = true;
    ev.index = config_.block_size - mode_.remaining;
    --mode_.remaining;
    return emit(std::move(ev));
}

const GenEvent& Session::step_audio() {
    const TokenId aud_end = vocab_.control_id(ControlRole::AudEnd);
    if (at_token_limit()) {
        // The unterminated segment is dropped.
        mode_ = {ModeKind::Finished, 0};
        GenEvent ev;
        ev.kind = EventKind::Eos;
        ev.mode = ModeKind::Audio;
        ev.token = vocab_.control_id(ControlRole::Eos);
        return emit(std::move(ev));
    }

    GenEvent ev;
    ev.mode = ModeKind::Audio;
    if (audio_segment_.size() >= config_.max_audio_tokens) {
        ev.token = aud_end;
    } else {
        const auto logits = backend_.next_logits(ContextView(context_, config_.conditioning));
        ev.token = draw(logits, *audio_mask_);
        ev.sampled = true;
        ev.inspected = true;
    }

    if (ev.token == aud_end) {
        ev.kind = EventKind::AudioSegmentComplete;
        ev.raw_tokens = config_.audio_codec ? config_.audio_codec->decode(audio_segment_) : audio_segment_;
        audio_segment_.clear();
        mode_ = {ModeKind::Text, 0};
    } else {
        ev.kind = EventKind::AudioToken;
        audio_segment_.push_back(ev.token - vocab_.range(Modality::Audio).start);
    }
    return emit(std::move(ev));
}

void Session::fuse_block() {
    auto cursor = backend_.next_block_logits(ContextView(context_, config_.conditioning), config_.block_size);
    for (std::size_t i = 0; i < config_.block_size; ++i) {
        GenEvent ev;
        ev.kind = EventKind::ImageToken;
        ev.mode = ModeKind::ImageBlock;
        ev.token = draw(cursor->logits(), *image_mask_);
        ev.sampled = true;
        ev.index = i;
        --mode_.remaining;
        cursor->accept(ev.token);
        emit(std::move(ev));
    }
}

Trace run_streaming(Session& session) {
    return run_streaming(session, [](const GenEvent&) {});
}

Trace run_streaming(Session& session, const std::function<void(const GenEvent&)>& on_event) {
    if (!session.fresh()) throw PreconditionError("run_streaming needs a fresh session");
    while (!session.finished()) on_event(session.step());
    return session.trace();
}

Trace run_fused(Session& session) {
    if (!session.fresh()) throw PreconditionError("run_fused needs a fresh session");
    const std::size_t block = session.config_.block_size;
    while (!session.finished()) {
        const auto mode = session.mode();
        if (mode.kind == ModeKind::ImageBlock && mode.remaining == block && !session.pending_open_) {
            session.fuse_block();
        } else {
            session.step();
        }
    }
    return session.trace();
}

Trace filter_trace(const Trace& trace, const VocabPartition& partition, const ModalityConstraint& constraint) {
    Trace out;
    for (const auto& ev : trace.events) {
        if (ev.token < partition.total_size() && constraint.permits(partition, ev.token)) out.events.push_back(ev);
    }
    out.counters = Trace::count(out.events);
    return out;
}

}  // namespace omni
