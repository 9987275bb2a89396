// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/tiers.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace kvtier {

namespace {

constexpr double kSmallMessage = 4096.0;
constexpr double kLargeMessage = 16.0 * 1024 * 1024;
constexpr std::uint64_t kGB = 1'000'000'000ULL;

SimTime ns(std::int64_t v) { return SimTime{v}; }

}  // namespace

void validate(const TierSpec& spec) {
    auto fail = [&](const std::string& why) {
        throw std::invalid_argument("tier " + std::to_string(spec.tier_index) + " (" + spec.name +
                                    "): " + why);
    };
    if (spec.tier_index < 0 || spec.tier_index >= kNumTiers) fail("tier_index out of range");
    if (!(spec.bandwidth_bytes_per_sec > 0)) fail("bandwidth must be positive");
    if (spec.base_latency.count() <= 0) fail("base latency must be positive");
    if (spec.latency_large < spec.base_latency) fail("latency_large below base latency");
    if (spec.capacity_bytes == 0) fail("capacity must be positive");
    if (!(spec.cost_dollars_per_gb_hour > 0)) fail("cost must be positive");
}

std::vector<TierSpec> default_tier_specs() {
    return {
        {0, "gpu_hbm", 3.35e12, ns(100), ns(100), 40 * kGB, 0.500},
        {1, "cpu_dram", 204e9, ns(5'000), ns(5'000), 160 * kGB, 0.050},
        {2, "cxl_memory", 64e9, ns(500), ns(500), 512 * kGB, 0.030},
        {3, "nvme_gds", 12e9, ns(10'000), ns(10'000), 3'988 * kGB, 0.020},
        {4, "rdma_pool", 50e9, ns(1'000), ns(100'000), 33'300 * kGB, 0.005},
        {5, "parallel_fs", 2e9, ns(1'000'000), ns(1'000'000), kUnboundedCapacity, 0.001},
    };
}

double effective_latency_ns(const TierSpec& spec, std::uint64_t size_bytes) {
    const double base = static_cast<double>(spec.base_latency.count());
    if (!spec.piecewise_latency()) return base;
    const double large = static_cast<double>(spec.latency_large.count());
    const double s = static_cast<double>(size_bytes);
    if (s <= kSmallMessage) return base;
    if (s >= kLargeMessage) return large;
    const double f = (std::log(s) - std::log(kSmallMessage)) /
                     (std::log(kLargeMessage) - std::log(kSmallMessage));
    return base + f * (large - base);
}

double transfer_ns(const TierSpec& spec, std::uint64_t size_bytes) {
    return effective_latency_ns(spec, size_bytes) +
           static_cast<double>(size_bytes) / spec.bandwidth_bytes_per_sec * 1e9;
}

SimTime transfer_time(const TierSpec& spec, std::uint64_t size_bytes) {
    return SimTime{std::llround(transfer_ns(spec, size_bytes))};
}

void validate(const ValueScoreParams& params) {
    if (!(params.recompute_cost_per_token_ns > 0))
        throw std::invalid_argument("recompute_cost_per_token_ns must be positive");
    if (!(params.gpu_hour_cost > 0)) throw std::invalid_argument("gpu_hour_cost must be positive");
    if (!(params.expected_residency_hours > 0))
        throw std::invalid_argument("expected_residency_hours must be positive");
    for (int k = 1; k < kNumTiers; ++k) {
        if (params.promotion_threshold[k] > params.promotion_threshold[k - 1])
            throw std::invalid_argument("promotion thresholds must be non-increasing with tier index");
    }
}

double recompute_cost(const BlockMeta& meta, const ValueScoreParams& params) {
    const double seconds = static_cast<double>(meta.token_span.length()) *
                           params.recompute_cost_per_token_ns * 1e-9;
    return seconds / 3600.0 * params.gpu_hour_cost;
}

double storage_cost(const TierSpec& tier, const BlockMeta& meta, const ValueScoreParams& params) {
    const double gb = static_cast<double>(meta.size_bytes) / 1e9;
    return gb * tier.cost_dollars_per_gb_hour * params.expected_residency_hours;
}

double value_score(double p_reuse, const BlockMeta& meta, const TierSpec& tier,
                   const ValueScoreParams& params) {
    if (p_reuse < 0.0 || p_reuse > 1.0) throw std::invalid_argument("p_reuse outside [0, 1]");
    return p_reuse * recompute_cost(meta, params) - storage_cost(tier, meta, params);
}

TierHierarchy::TierHierarchy(std::vector<TierSpec> specs) {
    if (specs.size() != static_cast<std::size_t>(kNumTiers))
        throw std::invalid_argument("hierarchy needs exactly six tiers");
    std::sort(specs.begin(), specs.end(),
              [](const TierSpec& a, const TierSpec& b) { return a.tier_index < b.tier_index; });
    for (int k = 0; k < kNumTiers; ++k) {
        validate(specs[k]);
        if (specs[k].tier_index != k) throw std::invalid_argument("tier indices must be unique 0..5");
        TierState st;
        st.spec = specs[k];
        tiers_.push_back(std::move(st));
    }
}

int TierHierarchy::check(int tier) const {
    if (tier < 0 || tier >= kNumTiers) throw std::out_of_range("tier index out of range");
    return tier;
}

const TierSpec& TierHierarchy::spec(int tier) const { return tiers_.at(check(tier)).spec; }
bool TierHierarchy::enabled(int tier) const { return tiers_.at(check(tier)).enabled; }
std::uint64_t TierHierarchy::used_bytes(int tier) const { return tiers_.at(check(tier)).used_bytes; }

std::uint64_t TierHierarchy::free_bytes(int tier) const {
    const auto& t = tiers_.at(check(tier));
    if (t.spec.unbounded()) return kUnboundedCapacity;
    return t.spec.capacity_bytes - t.used_bytes;
}

std::size_t TierHierarchy::resident_count(int tier) const {
    return tiers_.at(check(tier)).resident.size();
}

const std::unordered_map<BlockId, BlockMeta>& TierHierarchy::residents(int tier) const {
    return tiers_.at(check(tier)).resident;
}

Residency TierHierarchy::locate(BlockId id) const {
    auto it = location_.find(id);
    if (it == location_.end()) return std::nullopt;
    return it->second;
}

bool TierHierarchy::contains(int tier, BlockId id) const {
    return tiers_.at(check(tier)).resident.count(id) != 0;
}

bool TierHierarchy::in_flight(BlockId id) const { return in_flight_.count(id) != 0; }

std::optional<SimTime> TierHierarchy::in_flight_completion(BlockId id) const {
    auto it = in_flight_.find(id);
    if (it == in_flight_.end()) return std::nullopt;
    return it->second.completion;
}

void TierHierarchy::insert(int tier, BlockMeta meta) {
    auto& t = tiers_[tier];
    meta.resident_tier = tier;
    touch(meta.block_id);
    t.used_bytes += meta.size_bytes;
    location_[meta.block_id] = tier;
    t.resident.emplace(meta.block_id, std::move(meta));
}

BlockMeta TierHierarchy::remove(int tier, BlockId id) {
    auto& t = tiers_[tier];
    touch(id);
    auto it = t.resident.find(id);
    BlockMeta meta = std::move(it->second);
    t.resident.erase(it);
    t.used_bytes -= meta.size_bytes;
    auto loc = location_.find(id);
    if (loc != location_.end() && loc->second == tier) location_.erase(loc);
    return meta;
}

TierOpResult TierHierarchy::write_block(int tier, const BlockMeta& meta, SimTime now) {
    auto& t = tiers_.at(check(tier));
    if (!t.enabled) return {TierStatus::tier_disabled, now, 0};
    if (location_.count(meta.block_id)) return {TierStatus::illegal_state, now, 0};
    const std::uint64_t room = free_bytes(tier);
    if (meta.size_bytes > room) return {TierStatus::needs_eviction, now, meta.size_bytes - room};
    BlockMeta copy = meta;
    copy.last_access = now;
    insert(tier, std::move(copy));
    displaced_from_.erase(meta.block_id);
    return {TierStatus::ok, now + transfer_time(t.spec, meta.size_bytes), 0};
}

std::optional<ReadHit> TierHierarchy::read_block(int tier, BlockId id, SimTime now) {
    auto& t = tiers_.at(check(tier));
    if (!t.enabled) throw std::logic_error("read from disabled tier " + std::to_string(tier));
    auto it = t.resident.find(id);
    bool hit = it != t.resident.end();
    if (hit) {
        auto mig = in_flight_.find(id);
        if (mig != in_flight_.end() && mig->second.to_tier == tier && now < mig->second.completion)
            hit = false;
    }
    if (!hit) {
        t.miss_count++;
        return std::nullopt;
    }
    t.hit_count++;
    it->second.last_access = now;
    return ReadHit{it->second, now + transfer_time(t.spec, it->second.size_bytes)};
}

std::optional<BlockMeta> TierHierarchy::evict(int tier, BlockId id) {
    auto& t = tiers_.at(check(tier));
    if (!t.resident.count(id) || in_flight_.count(id)) return std::nullopt;
    displaced_from_.erase(id);
    return remove(tier, id);
}

TierOpResult TierHierarchy::promote(BlockId id, int from_tier, int to_tier, SimTime now) {
    check(from_tier);
    check(to_tier);
    if (from_tier == to_tier) return {TierStatus::ok, now, 0};
    if (to_tier > from_tier) return {TierStatus::illegal_state, now, 0};
    if (!tiers_[from_tier].enabled) return {TierStatus::illegal_state, now, 0};
    if (!tiers_[to_tier].enabled) return {TierStatus::tier_disabled, now, 0};
    auto& src = tiers_[from_tier];
    auto it = src.resident.find(id);
    if (it == src.resident.end() || in_flight_.count(id)) return {TierStatus::illegal_state, now, 0};
    const std::uint64_t size = it->second.size_bytes;
    const std::uint64_t room = free_bytes(to_tier);
    if (size > room) return {TierStatus::needs_eviction, now, size - room};
    SimTime done = now + transfer_time(src.spec, size) + transfer_time(tiers_[to_tier].spec, size);
    BlockMeta copy = it->second;
    insert(to_tier, std::move(copy));
    tiers_[to_tier].promotion_count++;
    in_flight_[id] = {from_tier, to_tier, done};
    displaced_from_.erase(id);
    return {TierStatus::ok, done, 0};
}

TierOpResult TierHierarchy::demote(BlockId id, int from_tier, int to_tier, SimTime now) {
    check(from_tier);
    check(to_tier);
    if (from_tier == to_tier) return {TierStatus::ok, now, 0};
    if (to_tier < from_tier) return {TierStatus::illegal_state, now, 0};
    if (!tiers_[from_tier].enabled) return {TierStatus::illegal_state, now, 0};
    if (!tiers_[to_tier].enabled) return {TierStatus::tier_disabled, now, 0};
    auto& src = tiers_[from_tier];
    auto it = src.resident.find(id);
    if (it == src.resident.end() || in_flight_.count(id)) return {TierStatus::illegal_state, now, 0};
    const std::uint64_t size = it->second.size_bytes;
    const std::uint64_t room = free_bytes(to_tier);
    if (size > room) return {TierStatus::needs_eviction, now, size - room};
    SimTime done = now + transfer_time(src.spec, size) + transfer_time(tiers_[to_tier].spec, size);
    insert(to_tier, remove(from_tier, id));
    src.demotion_count++;
    displaced_from_.erase(id);
    return {TierStatus::ok, done, 0};
}

void TierHierarchy::advance(SimTime now) {
    for (auto it = in_flight_.begin(); it != in_flight_.end();) {
        if (it->second.completion <= now) {
            auto& src = tiers_[it->second.from_tier];
            auto blk = src.resident.find(it->first);
            touch(it->first);
            if (blk != src.resident.end()) {
                src.used_bytes -= blk->second.size_bytes;
                src.resident.erase(blk);
            }
            it = in_flight_.erase(it);
        } else {
            ++it;
        }
    }
}

std::optional<int> TierHierarchy::find_room_at_or_below(int tier, std::uint64_t size) const {
    for (int k = tier; k < kNumTiers; ++k) {
        if (tiers_[k].enabled && free_bytes(k) >= size) return k;
    }
    for (int k = tier - 1; k >= 0; --k) {
        if (tiers_[k].enabled && free_bytes(k) >= size) return k;
    }
    return std::nullopt;
}

std::vector<Redistribution> TierHierarchy::disable_tier(int tier, SimTime now) {
    auto& t = tiers_.at(check(tier));
    if (!t.enabled) throw std::logic_error("tier " + std::to_string(tier) + " already disabled");
    // Settle migrations touching this tier before it leaves the graph.
    for (auto it = in_flight_.begin(); it != in_flight_.end();) {
        if (it->second.from_tier == tier || it->second.to_tier == tier) {
            auto& src = tiers_[it->second.from_tier];
            auto blk = src.resident.find(it->first);
            touch(it->first);
            if (blk != src.resident.end()) {
                src.used_bytes -= blk->second.size_bytes;
                src.resident.erase(blk);
            }
            it = in_flight_.erase(it);
        } else {
            ++it;
        }
    }
    t.enabled = false;

    std::vector<BlockId> ids;
    ids.reserve(t.resident.size());
    for (const auto& [id, meta] : t.resident) ids.push_back(id);
    std::sort(ids.begin(), ids.end());

    std::vector<Redistribution> events;
    for (BlockId id : ids) {
        const std::uint64_t size = t.resident.at(id).size_bytes;
        auto target = find_room_at_or_below(tier + 1 < kNumTiers ? tier + 1 : tier, size);
        if (!target) throw std::runtime_error("no enabled tier can absorb block " + std::to_string(id));
        SimTime done = now + transfer_time(t.spec, size) + transfer_time(tiers_[*target].spec, size);
        insert(*target, remove(tier, id));
        t.demotion_count++;
        displaced_from_[id] = tier;
        events.push_back({id, tier, *target, done});
    }
    return events;
}

std::vector<Redistribution> TierHierarchy::enable_tier(int tier, SimTime now) {
    auto& t = tiers_.at(check(tier));
    if (t.enabled) throw std::logic_error("tier " + std::to_string(tier) + " already enabled");
    t.enabled = true;

    std::vector<BlockId> ids;
    for (const auto& [id, origin] : displaced_from_) {
        if (origin == tier) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());

    std::vector<Redistribution> events;
    for (BlockId id : ids) {
        auto loc = locate(id);
        if (!loc || in_flight_.count(id)) continue;
        const std::uint64_t size = tiers_[*loc].resident.at(id).size_bytes;
        if (free_bytes(tier) < size) continue;
        SimTime done = now + transfer_time(tiers_[*loc].spec, size) + transfer_time(t.spec, size);
        insert(tier, remove(*loc, id));
        if (tier < *loc)
            t.promotion_count++;
        else
            tiers_[*loc].demotion_count++;
        displaced_from_.erase(id);
        events.push_back({id, *loc, tier, done});
    }
    return events;
}

int TierHierarchy::place(const BlockMeta& meta, double p_reuse, const ValueScoreParams& params) const {
    const double recompute = recompute_cost(meta, params);
    for (int k = 0; k < kNumTiers; ++k) {
        if (!tiers_[k].enabled) continue;
        const double relative = value_score(p_reuse, meta, tiers_[k].spec, params) / recompute;
        if (relative > params.promotion_threshold[k]) return k;
    }
    return slowest_enabled();
}

int TierHierarchy::fastest_enabled() const {
    for (int k = 0; k < kNumTiers; ++k) {
        if (tiers_[k].enabled) return k;
    }
    throw std::logic_error("no enabled tier");
}

int TierHierarchy::slowest_enabled() const {
    for (int k = kNumTiers - 1; k >= 0; --k) {
        if (tiers_[k].enabled) return k;
    }
    throw std::logic_error("no enabled tier");
}

std::optional<int> TierHierarchy::next_slower_enabled(int tier) const {
    for (int k = check(tier) + 1; k < kNumTiers; ++k) {
        if (tiers_[k].enabled) return k;
    }
    return std::nullopt;
}

std::vector<TierStats> TierHierarchy::stats() const {
    std::vector<TierStats> out;
    for (const auto& t : tiers_) {
        out.push_back({t.spec.tier_index, t.spec.name, t.enabled, t.spec.capacity_bytes,
                       t.used_bytes, t.resident.size(), t.hit_count, t.miss_count,
                       t.promotion_count, t.demotion_count});
    }
    return out;
}

void TierHierarchy::check_invariants() const {
    std::unordered_map<BlockId, int> seen;
    for (int k = 0; k < kNumTiers; ++k) {
        const auto& t = tiers_[k];
        std::uint64_t sum = 0;
        for (const auto& [id, meta] : t.resident) {
            sum += meta.size_bytes;
            seen[id]++;
            if (meta.resident_tier != k)
                throw std::logic_error("block " + std::to_string(id) + " residency tag mismatch");
        }
        if (sum != t.used_bytes)
            throw std::logic_error("tier " + std::to_string(k) + " used_bytes != sum of residents");
        if (!t.spec.unbounded() && t.used_bytes > t.spec.capacity_bytes)
            throw std::logic_error("tier " + std::to_string(k) + " over capacity");
        if (!t.enabled && !t.resident.empty())
            throw std::logic_error("disabled tier " + std::to_string(k) + " holds blocks");
    }
    for (const auto& [id, count] : seen) {
        auto mig = in_flight_.find(id);
        const int expected = mig == in_flight_.end() ? 1 : 2;
        if (count != expected)
            throw std::logic_error("block " + std::to_string(id) + " resident in " +
                                   std::to_string(count) + " tiers");
        auto loc = location_.find(id);
        if (loc == location_.end() || !tiers_[loc->second].resident.count(id))
            throw std::logic_error("block " + std::to_string(id) + " location index stale");
    }
    if (location_.size() != seen.size()) throw std::logic_error("location index has stale entries");
}

void TierHierarchy::check_recent_invariants() {
    if (!tracking_) throw std::logic_error("check_recent_invariants needs track_changes(true)");
    for (BlockId id : dirty_) {
        std::array<std::uint64_t, kNumTiers> sizes{};
        int count = 0;
        for (int k = 0; k < kNumTiers; ++k) {
            auto it = tiers_[k].resident.find(id);
            if (it == tiers_[k].resident.end()) continue;
            if (it->second.resident_tier != k)
                throw std::logic_error("block " + std::to_string(id) + " residency tag mismatch");
            sizes[k] = it->second.size_bytes;
            ++count;
        }
        auto prev = verified_.find(id);
        for (int k = 0; k < kNumTiers; ++k)
            verified_used_[k] = verified_used_[k] + sizes[k] - (prev == verified_.end() ? 0 : prev->second[k]);
        if (count == 0) {
            if (location_.count(id) || in_flight_.count(id))
                throw std::logic_error("block " + std::to_string(id) + " indexed but resident nowhere");
            if (prev != verified_.end()) verified_.erase(prev);
            continue;
        }
        const int expected = in_flight_.count(id) ? 2 : 1;
        if (count != expected)
            throw std::logic_error("block " + std::to_string(id) + " resident in " + std::to_string(count) +
                                   " tiers");
        auto loc = location_.find(id);
        if (loc == location_.end() || sizes[loc->second] == 0)
            throw std::logic_error("block " + std::to_string(id) + " location index stale");
        verified_[id] = sizes;
    }
    dirty_.clear();
    for (int k = 0; k < kNumTiers; ++k) {
        const auto& t = tiers_[k];
        if (verified_used_[k] != t.used_bytes)
            throw std::logic_error("tier " + std::to_string(k) + " used_bytes != sum of residents");
        if (!t.spec.unbounded() && t.used_bytes > t.spec.capacity_bytes)
            throw std::logic_error("tier " + std::to_string(k) + " over capacity");
        if (!t.enabled && !t.resident.empty())
            throw std::logic_error("disabled tier " + std::to_string(k) + " holds blocks");
    }
    if (location_.size() != verified_.size()) throw std::logic_error("location index has stale entries");
}

}  // namespace kvtier
