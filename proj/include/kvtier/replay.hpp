// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kvtier/agentic.hpp"
#include "kvtier/core.hpp"
#include "kvtier/eviction.hpp"
#include "kvtier/predictor.hpp"
#include "kvtier/prefetch.hpp"
#include "kvtier/sizing.hpp"
#include "kvtier/tiers.hpp"
#include "kvtier/trace.hpp"

namespace kvtier {

enum class PolicyKind : std::uint8_t { LRU, EMA, Bayesian };

inline constexpr std::array<PolicyKind, 3> kAllPolicies = {PolicyKind::LRU, PolicyKind::EMA, PolicyKind::Bayesian};

std::string_view to_string(PolicyKind p);
PolicyKind parse_policy(std::string_view s);

struct ReplayConfig {
    std::vector<TierSpec> tiers = default_tier_specs();
    /// Multiplies every bounded tier capacity; desk-scale traces need a small hierarchy.
    double capacity_scale = 0.04;
    /// Supplies layer/head geometry for the importance matrix.
    ModelConfig model = reference_model("Llama-3-70B");
    PredictorParams predictor;
    EvictionParams eviction;
    MultiplierTable multipliers = MultiplierTable::defaults();
    ValueScoreParams value;
    PrefetchParams prefetch{1, 8, false};
    /// Tool-switch preparation (Bayesian policy only).
    bool agentic = true;
    double agentic_smoothing = 1.0;
    double agentic_memory_decay = 0.5;
    ClassThresholds session_thresholds = kDefaultClassThresholds;
    /// Runs TierHierarchy::check_invariants and index checks after every event.
    bool debug_invariants = false;
};

void validate(const ReplayConfig& config);

/// Tier specs with bounded capacities scaled by config.capacity_scale.
std::vector<TierSpec> scaled_tiers(const ReplayConfig& config);

struct ReplayMetrics {
    PolicyKind policy = PolicyKind::LRU;
    std::uint64_t seed = 0;
    std::uint64_t accesses = 0;
    std::array<std::uint64_t, kNumTiers> hits{};
    std::uint64_t misses = 0;
    std::array<std::uint64_t, kNumTiers> promotions{};
    std::array<std::uint64_t, kNumTiers> demotions{};
    std::array<std::uint64_t, kNumTiers> used_bytes{};
    std::uint64_t drops = 0;
    std::uint64_t prefetches = 0;
    std::uint64_t tool_calls = 0;
    double reserved_bytes = 0.0;
    std::array<std::uint64_t, 4> session_classes{};
    double recompute_ns_charged = 0.0;
    double recompute_ns_saved = 0.0;
    std::uint64_t invariant_checks = 0;
    double wall_time_s = 0.0;

    std::uint64_t tier0_misses() const { return accesses - hits[0]; }
    /// Hits at Tier 0 or Tier 1 over all block accesses.
    double hit_rate_t01() const;
};

/// Replays block accesses in (time, sequence) order. Throws before processing
/// anything when the trace or config is invalid; throws std::logic_error on a
/// broken invariant in debug mode.
ReplayMetrics replay(const std::vector<AccessEvent>& trace, PolicyKind policy, const ReplayConfig& config,
                     std::uint64_t seed = 0);

/// Like replay, also returning the final predictor and agentic chain state.
struct ReplayArtifacts {
    ReplayMetrics metrics;
    PredictorState predictor;
    std::string agentic_chain_json;
};
ReplayArtifacts replay_with_state(const std::vector<AccessEvent>& trace, PolicyKind policy,
                                  const ReplayConfig& config, std::uint64_t seed = 0);

struct PolicySummary {
    double mean_hit_rate = 0.0;
    double stdev_hit_rate = 0.0;
    std::vector<ReplayMetrics> runs;
};

using PolicyComparison = std::map<PolicyKind, PolicySummary>;

/// Mean and sample standard deviation over a set of runs.
PolicySummary summarize(std::vector<ReplayMetrics> runs);

/// Replays the same trace once per seed and policy.
PolicyComparison compare_policies(const std::vector<AccessEvent>& trace, const ReplayConfig& config,
                                  const std::vector<std::uint64_t>& seeds);

/// Regenerates the workload for each seed, then replays every policy on it.
PolicyComparison compare_policies(const WorkloadSpec& workload, const ReplayConfig& config,
                                  const std::vector<std::uint64_t>& seeds);

}  // namespace kvtier
