// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kvtier/core.hpp"
#include "kvtier/sizing.hpp"

namespace kvtier {

struct EvictionParams {
    double ema_decay = 0.5;
    /// Positional decay length in tokens; infinity gives a pure recency EMA.
    double position_decay_tau = 2048.0;
};

void validate(const EvictionParams& params);

/// Observation weight exp(-distance / tau).
double observation_weight(double distance_tokens, const EvictionParams& params);

enum class LayerBand : std::uint8_t { early, middle, late };

/// Per-transition multipliers for the early/middle/late thirds of the layer stack.
struct MultiplierTable {
    std::map<TransitionType, std::array<double, 3>> bands;

    /// reasoning_step and same_tool_repeat identity; tool_switch 0.8 on middle
    /// layers; agent_handoff 0.5 on late layers. Stand-in values.
    static MultiplierTable defaults();
    static MultiplierTable identity();
};

/// [layer][kv head] EMA importance scores with per-head eviction multipliers.
/// MLA collapses to a single head per layer.
class ImportanceMatrix {
public:
    ImportanceMatrix(ArchitectureKind arch, std::uint32_t num_layers, std::uint32_t query_heads,
                     std::uint32_t kv_heads);
    static ImportanceMatrix for_model(const ModelConfig& cfg);

    ArchitectureKind arch() const { return arch_; }
    std::uint32_t num_layers() const { return num_layers_; }
    std::uint32_t num_kv_heads() const { return num_kv_heads_; }
    std::uint32_t query_heads() const { return query_heads_; }
    /// Query heads per stored head.
    std::uint32_t group_size() const { return query_heads_ / num_kv_heads_; }

    double score(std::uint32_t layer, std::uint32_t head) const;
    double multiplier(std::uint32_t layer, std::uint32_t head) const;
    /// Uniform 1/h for MHA, g/h_q for GQA/MQA, 1 for MLA.
    double head_weight(std::uint32_t head) const;
    std::uint32_t kv_head_for(std::uint32_t query_head) const;
    LayerBand band_of(std::uint32_t layer) const;

    /// One attention step on a layer: each touched KV head takes the max of the
    /// EMA updates proposed by its query heads in this step.
    void record_step(std::uint32_t layer, std::span<const std::pair<std::uint32_t, double>> accesses,
                     const EvictionParams& params);
    void record_access(std::uint32_t layer, std::uint32_t query_head, double distance_tokens,
                       const EvictionParams& params);
    /// Every head of every layer in the set observes the same distance.
    void record_block_access(const LayerSet& layers, double distance_tokens,
                             const EvictionParams& params);

    /// Replaces (never accumulates) multipliers from the table. A missing entry
    /// resets to identity and bumps missing_entry_warnings.
    void apply_transition_multipliers(TransitionType transition, const MultiplierTable& table);
    std::uint64_t missing_entry_warnings() const { return missing_entry_warnings_; }

    /// Aggregate weighted importance of the layers a block covers.
    double block_score(const LayerSet& layers) const;
    double block_score(const BlockMeta& meta) const { return block_score(meta.layer_set); }

    /// CSV rows "layer,head,score".
    std::string dump_csv() const;

    friend bool operator==(const ImportanceMatrix&, const ImportanceMatrix&) = default;

private:
    std::size_t at(std::uint32_t layer, std::uint32_t head) const;

    ArchitectureKind arch_;
    std::uint32_t num_layers_;
    std::uint32_t query_heads_;
    std::uint32_t num_kv_heads_;
    std::vector<double> scores_;
    std::vector<double> multipliers_;
    std::uint64_t missing_entry_warnings_ = 0;
};

class EmptyCandidates : public std::invalid_argument {
public:
    EmptyCandidates() : std::invalid_argument("select_victim needs at least one candidate") {}
};

/// Lowest block_score; ties broken by oldest last_access, then smallest block_id.
BlockId select_victim(const ImportanceMatrix& matrix, std::span<const BlockMeta> candidates);

}  // namespace kvtier
