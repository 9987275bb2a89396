// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kvtier/core.hpp"

namespace kvtier {

/// First-order Markov chain over tool names with add-k smoothing.
class ToolChain {
public:
    explicit ToolChain(double smoothing = 1.0);

    std::size_t intern(std::string_view tool);
    std::optional<std::size_t> find(std::string_view tool) const;
    std::size_t num_tools() const { return names_.size(); }
    const std::vector<std::string>& tools() const { return names_; }
    double smoothing() const { return k_; }

    void observe_transition(std::string_view from, std::string_view to);
    std::uint64_t count(std::string_view from, std::string_view to) const;
    /// (count + k) / (row total + n_tools * k); uniform for unknown rows.
    double probability(std::string_view from, std::string_view to) const;
    /// Every known tool, probability descending, ties broken by name.
    std::vector<std::pair<std::string, double>> predict_next(std::string_view current) const;

    /// {"smoothing": k, "tools": [...], "counts": {from: {to: n}}}
    std::string dump_json() const;

private:
    double k_;
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> ids_;
    std::vector<std::vector<std::uint64_t>> counts_;
    std::vector<std::uint64_t> row_totals_;
};

struct ToolMemoryProfile {
    double mean = 0.0;
    double variance = 0.0;
    double peak = 0.0;
    std::uint64_t observations = 0;

    double stddev() const;
};

class MemoryProfiles {
public:
    explicit MemoryProfiles(double decay = 0.5);

    void update(std::string_view tool, double observed_bytes);
    std::optional<ToolMemoryProfile> profile(std::string_view tool) const;
    /// Aggregate profile over every observation regardless of tool.
    const ToolMemoryProfile& global() const { return global_; }
    double decay() const { return decay_; }

    struct Prediction {
        double mean = 0.0;
        double peak = 0.0;
    };
    /// Falls back to the global profile for unseen tools.
    Prediction predict_memory(std::string_view tool) const;

private:
    static void step(ToolMemoryProfile& p, double x, double decay);

    double decay_;
    std::map<std::string, ToolMemoryProfile, std::less<>> profiles_;
    ToolMemoryProfile global_;
};

enum class SessionClass : std::uint8_t { Light, Medium, Heavy, Extreme };

std::string_view to_string(SessionClass c);

using ClassThresholds = std::array<double, 3>;

inline constexpr ClassThresholds kDefaultClassThresholds = {1e9, 4e9, 16e9};

/// Half-open bands: Light < t1 <= Medium < t2 <= Heavy < t3 <= Extreme.
SessionClass classify_session(double aggregate_peak_bytes,
                              const ClassThresholds& thresholds = kDefaultClassThresholds);

struct PreparationPlan {
    std::string tool;
    TransitionType transition_type = TransitionType::tool_switch;
    double reserve_bytes = 0.0;
    /// Tool whose tool_context blocks should be promoted ahead of use.
    std::string prefetch_tool;
    std::vector<BlockType> prefetch_block_types;
    std::vector<std::pair<std::string, double>> predicted_next;
};

/// Plans for a tool_call event given the session's previous tool, if any.
PreparationPlan on_tool_switch(const ToolChain& chain, const MemoryProfiles& profiles,
                               const AccessEvent& event, const std::optional<std::string>& previous_tool);

/// Chain, profiles and per-session last tool; chain updates are serialized.
class AgenticPredictor {
public:
    explicit AgenticPredictor(double smoothing = 1.0, double memory_decay = 0.5,
                              ClassThresholds thresholds = kDefaultClassThresholds);

    /// Plans from prior knowledge, then records the transition.
    PreparationPlan observe_tool_call(const AccessEvent& event);
    void observe_tool_memory(std::string_view tool, double bytes);
    /// Tracks the running session footprint; returns the session's current class.
    SessionClass observe_session_bytes(const std::string& session_id, double bytes);
    void end_session(const std::string& session_id);

    std::optional<std::string> last_tool(const std::string& session_id) const;
    const ToolChain& chain() const { return chain_; }
    const MemoryProfiles& profiles() const { return profiles_; }
    std::string dump_json() const;

private:
    mutable std::shared_mutex mutex_;
    ToolChain chain_;
    MemoryProfiles profiles_;
    ClassThresholds thresholds_;
    std::unordered_map<std::string, std::string> last_tool_;
    std::unordered_map<std::string, double> session_peak_;
};

}  // namespace kvtier
