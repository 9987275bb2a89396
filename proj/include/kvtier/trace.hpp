// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kvtier/core.hpp"

namespace kvtier {

enum class WorkloadFamily : std::uint8_t { sharegpt_like, lmsys_like, agentic };

std::string_view to_string(WorkloadFamily f);
WorkloadFamily parse_workload_family(std::string_view s);

struct WorkloadSpec {
    WorkloadFamily family = WorkloadFamily::lmsys_like;
    std::uint32_t num_sessions = 1000;
    std::uint64_t seed = 1;

    std::uint32_t block_tokens = 128;
    /// KV bytes per token across all layers; default is Llama-3-70B (80 x 4096).
    std::uint64_t bytes_per_token = 327'680;

    /// Lognormal lengths, parameterized by their means and a shared log-sigma.
    double mean_input_tokens = 1200;
    double mean_output_tokens = 250;
    double length_sigma = 0.8;

    /// Fraction of sessions whose system prompt is drawn from the shared pool.
    double shared_prompt_fraction = 0.75;
    std::uint32_t prompt_pool_size = 24;
    double mean_system_prompt_tokens = 1000;
    double prompt_length_sigma = 0.4;

    /// Turns per chat session: 1 + geometric extra turns with this mean total.
    double mean_turns = 1.2;
    /// Fraction of generated blocks typed intermediate_reasoning (single-use).
    double reasoning_fraction = 1.0;

    double session_arrival_rate_per_s = 0.5;
    double mean_think_time_s = 20.0;
    double token_time_ms = 20.0;
    double prefill_block_time_ms = 2.0;

    // Agentic family.
    std::uint32_t num_tools = 12;
    std::uint32_t min_tool_calls = 5;
    std::uint32_t max_tool_calls = 15;
    std::uint32_t tool_context_tokens = 384;
    double mean_tool_result_tokens = 200;
    std::uint32_t min_reasoning_blocks = 1;
    std::uint32_t max_reasoning_blocks = 4;
    /// Probability mass kept by each tool's preferred successor.
    double tool_transition_skew = 0.6;

    /// Per-family defaults; callers override individual fields afterwards.
    static WorkloadSpec defaults(WorkloadFamily family, std::uint32_t num_sessions = 1000,
                                 std::uint64_t seed = 1);
};

void validate(const WorkloadSpec& spec);

/// Seeded, portable random source: mt19937_64 with hand-rolled transforms so the
/// stream does not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform integer in [lo, hi].
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
    double normal();
    double lognormal_with_mean(double mean, double sigma);
    double exponential(double mean);
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

/// Events sorted by (time, session_id, per-session order) with sequence numbers assigned.
std::vector<AccessEvent> generate(const WorkloadSpec& spec);

class TraceParseError : public std::runtime_error {
public:
    TraceParseError(std::size_t line, const std::string& reason);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

inline constexpr int kTraceFormatVersion = 1;

/// One JSON object per line, preceded by a header line naming the format,
/// its version and the block mapping in use.
void emit(const std::vector<AccessEvent>& events, std::ostream& out);
void emit(const std::vector<AccessEvent>& events, const std::string& path);
std::string emit_string(const std::vector<AccessEvent>& events);

/// Accepts files with or without the header line; unknown fields are ignored.
/// Sequence numbers follow record order.
std::vector<AccessEvent> parse(std::istream& in);
std::vector<AccessEvent> parse(const std::string& path);
std::vector<AccessEvent> parse_string(std::string_view text);

/// Throws TraceParseError when events are out of (time, sequence) order or
/// carry fields inconsistent with their kind.
void validate_stream(const std::vector<AccessEvent>& events);

struct ReuseLabel {
    std::uint64_t sequence = 0;
    BlockId block_id = 0;
    BlockType block_type = BlockType::user_context;
    TransitionType transition_type = TransitionType::reasoning_step;
    bool reused = false;
    friend bool operator==(const ReuseLabel&, const ReuseLabel&) = default;
};

/// One label per block_access: reused is true when the block id appeared earlier.
std::vector<ReuseLabel> extract_reuse_labels(const std::vector<AccessEvent>& events);

/// Best-effort adapter for ShareGPT-style conversation JSON
/// ([{"id", "conversations": [{"from", "value"}]}]): system turns become
/// system_prompt blocks, human turns user_context, model turns
/// intermediate_reasoning. Tokens are approximated as ceil(chars / 4).
std::vector<AccessEvent> from_conversations(std::string_view json_text, std::uint32_t block_tokens,
                                            std::uint64_t bytes_per_token);

}  // namespace kvtier
