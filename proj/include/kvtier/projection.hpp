// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kvtier/core.hpp"
#include "kvtier/sizing.hpp"
#include "kvtier/tiers.hpp"

namespace kvtier {

struct ReplayMetrics;

/// Fraction of block accesses served by each tier; the remainder is recomputed.
using HitMix = std::array<double, kNumTiers>;

void validate_mix(const HitMix& mix);

/// Per-tier fractions observed in a replay (hits[k] / accesses).
HitMix mix_from_metrics(const ReplayMetrics& metrics);

/// Published latency/throughput numbers for the GPU-only configuration.
struct BaselineAnchor {
    double ttft_p50_s = 1.2;
    double ttft_p99_s = 4.2;
    double tbt_p99_s = 0.048;
    double throughput = 1450.0;
    friend bool operator==(const BaselineAnchor&, const BaselineAnchor&) = default;
};

/// y = compute_s + accesses * stall_s: a latency with a fixed compute part
/// plus a number of synchronous block fetches on the critical path.
struct LatencyFit {
    double compute_s = 0.0;
    double accesses = 0.0;
    friend bool operator==(const LatencyFit&, const LatencyFit&) = default;
};

struct TierRow {
    std::string label;
    /// Tiers 0 .. tiers_enabled-1 are enabled.
    int tiers_enabled = 1;
    HitMix mix{};
    friend bool operator==(const TierRow&, const TierRow&) = default;
};

struct Calibration {
    std::string model = "Llama-3-70B";
    double saturation_throughput = 5000.0;
    /// Compute time per block token that fetch stalls add to.
    double compute_ns_per_token = 39'062.5;
    double recompute_cost_per_token_ns = 300'000.0;
    double gpus_per_node = 8.0;
    double gpu_hour_cost = 2.0;
    BaselineAnchor anchor;
    HitMix anchor_mix{};
    /// GPU-only row first, then one row per added tier.
    std::vector<TierRow> tier_rows;
    LatencyFit ttft_p50;
    LatencyFit ttft_p99;
    LatencyFit tbt_p99;
    double cost_calibration = 1.0;
    /// Share of each bounded non-HBM tier a GPU keeps occupied, per node GPU.
    double occupancy_fraction = 0.0;

    const HitMix& full_mix() const;
    friend bool operator==(const Calibration&, const Calibration&) = default;
};

/// Published numbers the calibration is fitted against.
struct CalibrationTargets {
    std::string model = "Llama-3-70B";
    BaselineAnchor anchor;
    double anchor_cost = 0.82;
    double gpu_hour_cost = 2.0;
    double saturation_throughput = 5000.0;
    double compute_ns_per_token = 39'062.5;
    double recompute_cost_per_token_ns = 300'000.0;
    double gpus_per_node = 8.0;
    /// HBM hit fraction of the GPU-only configuration; the rest recomputes.
    double anchor_tier0_fraction = 0.6;
    /// (label, throughput) per configuration as tiers 1..5 are added in order.
    std::vector<std::pair<std::string, double>> tier_throughputs = {
        {"+ CPU DRAM", 2100.0}, {"+ CXL 3.0", 2850.0}, {"+ NVMe (GDS)", 3200.0},
        {"+ RDMA Pool", 3950.0}, {"Full system", 4150.0}};
    double full_ttft_p50_s = 0.4;
    double full_ttft_p99_s = 1.1;
    double full_tbt_p99_s = 0.032;
    double full_cost = 0.43;
};

/// Closed-form inversion: each added tier's fraction is moved from recompute so
/// that the row's throughput is met exactly; latency fits pass through the
/// GPU-only and full-system points; the cost factor is fitted on the GPU-only
/// row and the occupancy share on the full-system row. Throws std::domain_error
/// when a row cannot be met.
Calibration fit_calibration(const CalibrationTargets& targets = {});

std::string calibration_to_json(const Calibration& c);
/// Throws ConfigError on malformed input or unknown keys.
Calibration calibration_from_json(const std::string& text);
Calibration load_calibration(const std::string& path);

enum class AblationComponent : std::uint8_t { sizing, bayesian, multitier, head_eviction, dedup, rope };

inline constexpr std::array<AblationComponent, 6> kAllAblations = {
    AblationComponent::sizing,        AblationComponent::bayesian, AblationComponent::multitier,
    AblationComponent::head_eviction, AblationComponent::dedup,    AblationComponent::rope};

std::string_view to_string(AblationComponent c);
AblationComponent parse_ablation(std::string_view s);

struct ProjectionInputs {
    ModelConfig model = reference_model("Llama-3-70B");
    std::vector<TierSpec> hierarchy = default_tier_specs();
    HitMix hit_fractions{};
    std::uint64_t batch_size = 22;
    /// Batch size behind the anchor throughput.
    std::uint64_t anchor_batch_size = 22;
    SizingBudget budget = reference_budget();
    BaselineAnchor anchor;
    double gpu_hour_cost = 2.0;
    Calibration calibration;
    /// Hit mixes with a component reverted; a missing entry means no change.
    std::map<AblationComponent, HitMix> fallback_mixes;
};

void validate(const ProjectionInputs& in);

/// Full-hierarchy inputs for a model from a calibration; batch sizes from sizing.
ProjectionInputs calibrated_inputs(const Calibration& c, const ModelConfig& model,
                                   const SizingBudget& budget = reference_budget());

struct CapacityProjection {
    std::uint64_t bytes = 0;
    /// True when an unbounded tier is enabled; bytes then counts bounded tiers only.
    bool open_ended = false;
};

CapacityProjection project_capacity(const std::vector<TierSpec>& hierarchy);
/// "40 GB", "4.7 TB", "38+ TB".
std::string capacity_label(const CapacityProjection& c);

/// Expected per-access stall: sum of fraction x transfer time plus the
/// recompute share. Fractions on tiers absent from the hierarchy recompute.
double expected_stall_ns(const ProjectionInputs& in, const HitMix& mix);

double project_throughput(const ProjectionInputs& in);

struct TtftProjection {
    double p50_s = 0.0;
    double p99_s = 0.0;
};
TtftProjection project_ttft(const ProjectionInputs& in);
double project_tbt(const ProjectionInputs& in);

/// Dollars per million tokens; throws std::invalid_argument unless throughput > 0.
double project_cost(const ProjectionInputs& in, double throughput);

/// Percentage throughput change with the component reverted to its fallback.
double ablation(const ProjectionInputs& in, AblationComponent component);

struct ProjectionRow {
    std::string configuration;
    CapacityProjection capacity;
    double ttft_p50_s = 0.0;
    double ttft_p99_s = 0.0;
    double tbt_p99_s = 0.0;
    double throughput = 0.0;
    double cost_per_mtok = 0.0;
};

ProjectionRow project_row(const std::string& label, const ProjectionInputs& in);

/// Published systems compared against; carried through as data.
struct SystemRow {
    std::string system;
    double ttft_p50_s = 0.0;
    double ttft_p99_s = 0.0;
    double tbt_p99_s = 0.0;
    double throughput = 0.0;
    double cost_per_mtok = 0.0;
};

struct AblationColumn {
    std::string label;
    ProjectionInputs inputs;
};

struct ProjectionReport {
    std::vector<FleetRow> sizing;
    std::vector<ProjectionRow> tiers;
    std::vector<SystemRow> systems;
    ProjectionRow ours;
    std::vector<std::string> ablation_columns;
    /// component -> one percentage per column.
    std::vector<std::pair<AblationComponent, std::vector<double>>> ablation;
};

struct ReportSetup {
    Calibration calibration;
    std::vector<ModelConfig> fleet = reference_models();
    SizingBudget budget = reference_budget();
    std::vector<SystemRow> systems;
    std::vector<AblationColumn> ablation_columns;
};

ProjectionReport build_report(const ReportSetup& setup);

enum class ReportFormat : std::uint8_t { table, csv, json };
ReportFormat parse_report_format(std::string_view s);
std::string format_report(const ProjectionReport& report, ReportFormat format);

}  // namespace kvtier
