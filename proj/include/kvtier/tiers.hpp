// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kvtier/core.hpp"

namespace kvtier {

inline constexpr std::uint64_t kUnboundedCapacity = std::numeric_limits<std::uint64_t>::max();

struct TierSpec {
    int tier_index = 0;
    std::string name;
    double bandwidth_bytes_per_sec = 1.0;
    SimTime base_latency{1};
    /// Latency for large transfers; equals base_latency for constant-latency tiers.
    SimTime latency_large{1};
    std::uint64_t capacity_bytes = kUnboundedCapacity;
    double cost_dollars_per_gb_hour = 0.0;

    bool unbounded() const { return capacity_bytes == kUnboundedCapacity; }
    bool piecewise_latency() const { return latency_large != base_latency; }
};

void validate(const TierSpec& spec);

/// HBM, DRAM, CXL, NVMe, RDMA, parallel FS with datasheet bandwidth/latency/cost;
/// capacities give 40 GB / 200 GB / 712 GB / 4.7 TB / 38 TB cumulative, Tier 5 unbounded.
std::vector<TierSpec> default_tier_specs();

/// Latency component of a transfer. Piecewise tiers interpolate linearly in
/// log(size) between base_latency at <= 4 KiB and latency_large at >= 16 MiB.
double effective_latency_ns(const TierSpec& spec, std::uint64_t size_bytes);

/// Exact (unrounded) transfer time in nanoseconds; strictly increasing in size.
double transfer_ns(const TierSpec& spec, std::uint64_t size_bytes);

/// transfer_ns rounded to the nearest whole nanosecond.
SimTime transfer_time(const TierSpec& spec, std::uint64_t size_bytes);

struct ValueScoreParams {
    double recompute_cost_per_token_ns = 300'000.0;
    double gpu_hour_cost = 2.0;
    double expected_residency_hours = 1e-4;
    /// Minimum relative score (value / recompute cost) a block needs to be placed in
    /// each tier. Non-increasing with tier index; the slowest tier is the fallback.
    std::array<double, kNumTiers> promotion_threshold = {0.75, 0.1, 0.05, 0.03, 0.01, -1.0};
};

void validate(const ValueScoreParams& params);

/// Dollar cost of recomputing the block's tokens at the configured GPU-hour price.
double recompute_cost(const BlockMeta& meta, const ValueScoreParams& params);

/// Dollar cost of holding the block in the tier for the expected residency.
double storage_cost(const TierSpec& tier, const BlockMeta& meta, const ValueScoreParams& params);

/// p_reuse * recompute_cost - storage_cost, in dollars.
double value_score(double p_reuse, const BlockMeta& meta, const TierSpec& tier,
                   const ValueScoreParams& params);

enum class TierStatus : std::uint8_t { ok, needs_eviction, tier_disabled, illegal_state };

struct TierOpResult {
    TierStatus status = TierStatus::ok;
    SimTime completion{0};
    std::uint64_t bytes_short = 0;

    bool ok() const { return status == TierStatus::ok; }
};

struct ReadHit {
    BlockMeta meta;
    SimTime completion{0};
};

struct Redistribution {
    BlockId block_id = 0;
    int from_tier = 0;
    int to_tier = 0;
    SimTime completion{0};
    friend bool operator==(const Redistribution&, const Redistribution&) = default;
};

struct TierStats {
    int tier_index = 0;
    std::string name;
    bool enabled = true;
    std::uint64_t capacity_bytes = 0;
    std::uint64_t used_bytes = 0;
    std::uint64_t resident_blocks = 0;
    std::uint64_t hit_count = 0;
    std::uint64_t miss_count = 0;
    std::uint64_t promotion_count = 0;
    std::uint64_t demotion_count = 0;
};

/// Six simulated tiers behind one Allocate/Read/Write/Evict interface.
///
/// Externally synchronized: one mutator at a time. A promotion keeps the block
/// readable from its source tier until the completion time passes; demotions
/// release the source immediately. Blocks in flight are resident in both tiers
/// and must not be evicted.
class TierHierarchy {
public:
    explicit TierHierarchy(std::vector<TierSpec> specs = default_tier_specs());

    const TierSpec& spec(int tier) const;
    bool enabled(int tier) const;
    std::uint64_t used_bytes(int tier) const;
    std::uint64_t free_bytes(int tier) const;
    std::size_t resident_count(int tier) const;
    const std::unordered_map<BlockId, BlockMeta>& residents(int tier) const;

    /// Tier holding the block; during a promotion this is the destination.
    Residency locate(BlockId id) const;
    bool contains(int tier, BlockId id) const;
    bool in_flight(BlockId id) const;
    /// Completion time of an in-flight promotion.
    std::optional<SimTime> in_flight_completion(BlockId id) const;

    /// Places a new block. Does not mutate when capacity is short.
    TierOpResult write_block(int tier, const BlockMeta& meta, SimTime now);

    /// Hit updates last_access and hit_count; miss (nullopt) bumps miss_count.
    std::optional<ReadHit> read_block(int tier, BlockId id, SimTime now);

    /// Removes the block from the tier without counting it as a demotion.
    std::optional<BlockMeta> evict(int tier, BlockId id);

    /// Moves a block to a faster tier. Completion covers the read leg at the
    /// source and the write leg at the destination.
    TierOpResult promote(BlockId id, int from_tier, int to_tier, SimTime now);
    /// Moves a block to a slower tier; source space is released immediately.
    TierOpResult demote(BlockId id, int from_tier, int to_tier, SimTime now);

    /// Finishes every promotion whose completion time is <= now.
    void advance(SimTime now);

    /// Removes the tier from the graph and pushes its blocks to the next enabled
    /// slower tier, cascading on overflow (falls back to faster tiers only when
    /// nothing slower is enabled).
    std::vector<Redistribution> disable_tier(int tier, SimTime now);

    /// Re-enables the tier and pulls back blocks displaced by disable_tier that
    /// have not been touched since.
    std::vector<Redistribution> enable_tier(int tier, SimTime now);

    /// Fastest enabled tier whose relative score clears its threshold; the
    /// slowest enabled tier otherwise.
    int place(const BlockMeta& meta, double p_reuse, const ValueScoreParams& params) const;

    int fastest_enabled() const;
    int slowest_enabled() const;
    /// Next enabled tier strictly slower than `tier`, if any.
    std::optional<int> next_slower_enabled(int tier) const;

    std::vector<TierStats> stats() const;
    void record_miss(int tier) { tiers_.at(check(tier)).miss_count++; }

    /// Throws std::logic_error when occupancy or residency bookkeeping is inconsistent.
    void check_invariants() const;

    /// Records which blocks each mutation touches. Must be switched on before
    /// the first write for check_recent_invariants to be meaningful.
    void track_changes(bool on) { tracking_ = on; }
    /// Same guarantees as check_invariants, re-deriving occupancy from the
    /// resident maps only for blocks touched since the previous call.
    void check_recent_invariants();

private:
    struct TierState {
        TierSpec spec;
        std::uint64_t used_bytes = 0;
        std::unordered_map<BlockId, BlockMeta> resident;
        std::uint64_t hit_count = 0;
        std::uint64_t miss_count = 0;
        std::uint64_t promotion_count = 0;
        std::uint64_t demotion_count = 0;
        bool enabled = true;
    };
    struct Migration {
        int from_tier = 0;
        int to_tier = 0;
        SimTime completion{0};
    };

    int check(int tier) const;
    void insert(int tier, BlockMeta meta);
    BlockMeta remove(int tier, BlockId id);
    std::optional<int> find_room_at_or_below(int tier, std::uint64_t size) const;

    std::vector<TierState> tiers_;
    std::unordered_map<BlockId, int> location_;
    std::map<BlockId, Migration> in_flight_;
    std::unordered_map<BlockId, int> displaced_from_;

    void touch(BlockId id) {
        if (tracking_) dirty_.insert(id);
    }
    bool tracking_ = false;
    std::unordered_set<BlockId> dirty_;
    std::unordered_map<BlockId, std::array<std::uint64_t, kNumTiers>> verified_;
    std::array<std::uint64_t, kNumTiers> verified_used_{};
};

/// Consistent-hash ring assigning keys to nodes with virtual nodes; O(log n) lookup.
class HashRing {
public:
    HashRing(std::uint32_t num_nodes, std::uint32_t virtual_nodes_per_node = 64);

    std::uint32_t node_for(std::uint64_t key) const;
    std::uint32_t num_nodes() const { return num_nodes_; }
    std::size_t ring_size() const { return ring_.size(); }

private:
    std::uint32_t num_nodes_;
    std::vector<std::pair<std::uint64_t, std::uint32_t>> ring_;
};

}  // namespace kvtier
