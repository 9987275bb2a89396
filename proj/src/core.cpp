// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/core.hpp"

namespace kvtier {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& values, const char* what) {
    for (E v : values) {
        if (to_string(v) == s) return v;
    }
    throw ParseEnumError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(BlockType t) {
    switch (t) {
        case BlockType::system_prompt: return "system_prompt";
        case BlockType::tool_context: return "tool_context";
        case BlockType::user_context: return "user_context";
        case BlockType::intermediate_reasoning: return "intermediate_reasoning";
    }
    return "?";
}

std::string_view to_string(TransitionType t) {
    switch (t) {
        case TransitionType::same_tool_repeat: return "same_tool_repeat";
        case TransitionType::tool_switch: return "tool_switch";
        case TransitionType::reasoning_step: return "reasoning_step";
        case TransitionType::agent_handoff: return "agent_handoff";
    }
    return "?";
}

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::request_start: return "request_start";
        case EventKind::block_access: return "block_access";
        case EventKind::tool_call: return "tool_call";
        case EventKind::request_end: return "request_end";
    }
    return "?";
}

std::string_view to_string(ArchitectureKind a) {
    switch (a) {
        case ArchitectureKind::MHA: return "MHA";
        case ArchitectureKind::GQA: return "GQA";
        case ArchitectureKind::MQA: return "MQA";
        case ArchitectureKind::MLA: return "MLA";
    }
    return "?";
}

BlockType parse_block_type(std::string_view s) {
    return parse_enum(s, kAllBlockTypes, "block_type");
}

TransitionType parse_transition_type(std::string_view s) {
    return parse_enum(s, kAllTransitionTypes, "transition_type");
}

EventKind parse_event_kind(std::string_view s) {
    static constexpr std::array<EventKind, 4> kinds = {
        EventKind::request_start, EventKind::block_access, EventKind::tool_call,
        EventKind::request_end};
    return parse_enum(s, kinds, "kind");
}

ArchitectureKind parse_architecture(std::string_view s) {
    static constexpr std::array<ArchitectureKind, 4> archs = {
        ArchitectureKind::MHA, ArchitectureKind::GQA, ArchitectureKind::MQA,
        ArchitectureKind::MLA};
    return parse_enum(s, archs, "architecture");
}

void validate(const BlockMeta& meta) {
    if (meta.token_span.end <= meta.token_span.start)
        throw std::invalid_argument("block " + std::to_string(meta.block_id) +
                                    ": token span must be non-empty");
    if (meta.size_bytes == 0)
        throw std::invalid_argument("block " + std::to_string(meta.block_id) +
                                    ": size_bytes must be positive");
    if (meta.resident_tier && (*meta.resident_tier < 0 || *meta.resident_tier >= kNumTiers))
        throw std::invalid_argument("block " + std::to_string(meta.block_id) +
                                    ": resident tier out of range");
    if (meta.layer_set.count == 0)
        throw std::invalid_argument("block " + std::to_string(meta.block_id) +
                                    ": empty layer set");
}

std::uint32_t block_tokens_for_arch(ArchitectureKind arch) {
    switch (arch) {
        case ArchitectureKind::MLA: return 512;
        case ArchitectureKind::GQA:
        case ArchitectureKind::MQA: return 128;
        case ArchitectureKind::MHA: return 64;
    }
    return 64;
}

std::string to_hex(const ContentHash& h) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (auto b : h) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

}  // namespace kvtier
