// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kvtier {

/// Simulated time, integer nanoseconds since simulation start.
using SimTime = std::chrono::nanoseconds;

using BlockId = std::uint64_t;
using ContentHash = std::array<std::uint8_t, 32>;

/// Tier index 0..5; empty means the block is not resident anywhere.
using Residency = std::optional<int>;

inline constexpr int kNumTiers = 6;

enum class BlockType : std::uint8_t {
    system_prompt,
    tool_context,
    user_context,
    intermediate_reasoning,
};

enum class TransitionType : std::uint8_t {
    same_tool_repeat,
    tool_switch,
    reasoning_step,
    agent_handoff,
};

enum class EventKind : std::uint8_t {
    request_start,
    block_access,
    tool_call,
    request_end,
};

enum class ArchitectureKind : std::uint8_t { MHA, GQA, MQA, MLA };

inline constexpr std::array<BlockType, 4> kAllBlockTypes = {
    BlockType::system_prompt, BlockType::tool_context, BlockType::user_context,
    BlockType::intermediate_reasoning};

inline constexpr std::array<TransitionType, 4> kAllTransitionTypes = {
    TransitionType::same_tool_repeat, TransitionType::tool_switch,
    TransitionType::reasoning_step, TransitionType::agent_handoff};

/// Unknown enum spelling in serialized input.
class ParseEnumError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string_view to_string(BlockType t);
std::string_view to_string(TransitionType t);
std::string_view to_string(EventKind k);
std::string_view to_string(ArchitectureKind a);

BlockType parse_block_type(std::string_view s);
TransitionType parse_transition_type(std::string_view s);
EventKind parse_event_kind(std::string_view s);
ArchitectureKind parse_architecture(std::string_view s);

/// Dense index of a (block type, transition type) pair in [0, 16).
struct CellKey {
    BlockType block = BlockType::system_prompt;
    TransitionType transition = TransitionType::reasoning_step;

    constexpr std::size_t index() const {
        return static_cast<std::size_t>(block) * 4 + static_cast<std::size_t>(transition);
    }
    static constexpr CellKey from_index(std::size_t i) {
        return {static_cast<BlockType>(i / 4), static_cast<TransitionType>(i % 4)};
    }
    friend constexpr bool operator==(CellKey, CellKey) = default;
};

inline constexpr std::size_t kNumCells = 16;

/// Half-open token interval [start, end).
struct TokenSpan {
    std::uint64_t start = 0;
    std::uint64_t end = 1;

    std::uint64_t length() const { return end - start; }
    bool intersects(std::uint64_t lo, std::uint64_t hi_inclusive) const {
        return start <= hi_inclusive && end > lo;
    }
    double midpoint() const { return 0.5 * static_cast<double>(start + end); }
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// Contiguous range of layers [first, first + count). Whole-stack blocks cover every layer.
struct LayerSet {
    std::uint32_t first = 0;
    std::uint32_t count = 1;

    static LayerSet all(std::uint32_t num_layers) { return {0, num_layers}; }
    static LayerSet single(std::uint32_t layer) { return {layer, 1}; }

    std::uint32_t end() const { return first + count; }
    bool contains(std::uint32_t layer) const { return layer >= first && layer < end(); }
    friend bool operator==(const LayerSet&, const LayerSet&) = default;
};

struct BlockMeta {
    BlockId block_id = 0;
    std::string session_id;
    BlockType block_type = BlockType::user_context;
    TokenSpan token_span;
    LayerSet layer_set;
    std::uint64_t size_bytes = 1;
    ContentHash content_hash{};
    std::uint32_t ref_count = 0;
    SimTime last_access{0};
    Residency resident_tier;
    /// Transition type of the most recent access; keys the reuse predictor.
    TransitionType last_transition = TransitionType::reasoning_step;

    CellKey cell() const { return {block_type, last_transition}; }
};

/// Throws std::invalid_argument when a BlockMeta violates its invariants.
void validate(const BlockMeta& meta);

struct AccessEvent {
    SimTime time{0};
    std::string session_id;
    BlockId block_id = 0;
    BlockType block_type = BlockType::user_context;
    TransitionType transition_type = TransitionType::reasoning_step;
    std::uint64_t position = 0;
    EventKind kind = EventKind::block_access;
    std::optional<std::string> tool_name;
    std::uint64_t size_bytes = 0;
    /// Optional extensions carried by generated traces.
    std::optional<std::uint64_t> content_seed;
    std::optional<TokenSpan> token_span;
    /// Global ordering tiebreak, assigned at parse/generation time.
    std::uint64_t sequence = 0;

    friend bool operator==(const AccessEvent&, const AccessEvent&) = default;
};

/// Per-block token span for an architecture: 512 MLA, 128 GQA/MQA, 64 MHA.
std::uint32_t block_tokens_for_arch(ArchitectureKind arch);

std::string to_hex(const ContentHash& h);

}  // namespace kvtier
