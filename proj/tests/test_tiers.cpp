// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "kvtier/tiers.hpp"

using namespace kvtier;

namespace {

constexpr std::uint64_t kGB = 1'000'000'000ULL;

BlockMeta block(BlockId id, std::uint64_t size, std::uint64_t tokens = 128) {
    BlockMeta m;
    m.block_id = id;
    m.session_id = "s";
    m.size_bytes = size;
    m.token_span = {0, tokens};
    return m;
}

std::vector<TierSpec> tiny(std::uint64_t cap) {
    auto specs = default_tier_specs();
    for (int k = 0; k < kNumTiers - 1; ++k) specs[k].capacity_bytes = cap;
    return specs;
}

}  // namespace

TEST(TierSpecs, CumulativeCapacities) {
    const auto specs = default_tier_specs();
    ASSERT_EQ(specs.size(), 6u);
    std::uint64_t cum = 0;
    const std::uint64_t expect[] = {40, 200, 712, 4700, 38000};
    for (int k = 0; k < 5; ++k) {
        cum += specs[k].capacity_bytes;
        EXPECT_EQ(cum, expect[k] * kGB) << specs[k].name;
    }
    EXPECT_TRUE(specs[5].unbounded());
    for (int k = 1; k < 6; ++k) EXPECT_LE(specs[k].cost_dollars_per_gb_hour, specs[k - 1].cost_dollars_per_gb_hour);
}

TEST(TierSpecs, Validation) {
    auto s = default_tier_specs()[1];
    EXPECT_NO_THROW(validate(s));
    s.bandwidth_bytes_per_sec = 0;
    EXPECT_THROW(validate(s), std::invalid_argument);
    s = default_tier_specs()[1];
    s.latency_large = SimTime{1};
    EXPECT_THROW(validate(s), std::invalid_argument);
}

TEST(Transfer, LatencyPlusBandwidth) {
    const auto dram = default_tier_specs()[1];
    // 5 us latency plus 204 MB at 204 GB/s = 1 ms.
    EXPECT_DOUBLE_EQ(transfer_ns(dram, 204'000'000), 5'000.0 + 1e6);
    EXPECT_EQ(transfer_time(dram, 204'000'000), SimTime{1'005'000});
}

TEST(Transfer, PiecewiseLatencyInterpolatesInLogSize) {
    const auto rdma = default_tier_specs()[4];
    ASSERT_TRUE(rdma.piecewise_latency());
    EXPECT_DOUBLE_EQ(effective_latency_ns(rdma, 1024), 1'000.0);
    EXPECT_DOUBLE_EQ(effective_latency_ns(rdma, 32u << 20), 100'000.0);
    const double mid = std::sqrt(4096.0 * 16.0 * 1024 * 1024);
    EXPECT_NEAR(effective_latency_ns(rdma, static_cast<std::uint64_t>(mid)), 50'500.0, 1.0);
}

TEST(Transfer, StrictlyIncreasingInSize) {
    for (const auto& spec : default_tier_specs()) {
        double prev = -1;
        for (std::uint64_t s = 1; s < (1ull << 30); s = s * 3 + 1) {
            const double t = transfer_ns(spec, s);
            EXPECT_GT(t, prev) << spec.name << " at " << s;
            prev = t;
        }
    }
}

TEST(ValueScore, RecomputeMinusStorage) {
    ValueScoreParams p;
    const auto m = block(1, 1'000'000'000, 1000);
    // 1000 tokens x 300 us = 0.3 s of a $2/h GPU.
    const double recompute = 0.3 / 3600.0 * 2.0;
    EXPECT_NEAR(recompute_cost(m, p), recompute, 1e-15);
    const auto hbm = default_tier_specs()[0];
    EXPECT_NEAR(storage_cost(hbm, m, p), 0.5 * 1e-4, 1e-15);
    EXPECT_NEAR(value_score(0.5, m, hbm, p), 0.5 * recompute - 0.5e-4, 1e-15);
    EXPECT_THROW(value_score(1.5, m, hbm, p), std::invalid_argument);
}

TEST(ValueScore, ThresholdsMustBeNonIncreasing) {
    ValueScoreParams p;
    p.promotion_threshold = {0.1, 0.2, 0, 0, 0, -1};
    EXPECT_THROW(validate(p), std::invalid_argument);
}

TEST(Placement, HighReuseGoesFastLowReuseGoesSlow) {
    TierHierarchy h;
    ValueScoreParams p;
    const auto m = block(1, 40'000'000);
    EXPECT_EQ(h.place(m, 1.0, p), 0);
    EXPECT_EQ(h.place(m, 0.0, p), 5);
    int prev = 0;
    for (double q = 1.0; q >= 0.0; q -= 0.05) {
        const int t = h.place(m, q, p);
        EXPECT_GE(t, prev) << "placement must not get faster as reuse drops";
        prev = t;
    }
}

TEST(Placement, SkipsDisabledTiers) {
    TierHierarchy h;
    ValueScoreParams p;
    h.disable_tier(0, SimTime{0});
    EXPECT_EQ(h.place(block(1, 1000), 1.0, p), 1);
    EXPECT_EQ(h.fastest_enabled(), 1);
    EXPECT_EQ(h.next_slower_enabled(0), std::optional<int>(1));
}

TEST(Hierarchy, WriteReadEvict) {
    TierHierarchy h(tiny(1000));
    EXPECT_TRUE(h.write_block(0, block(1, 600), SimTime{0}).ok());
    const auto r = h.write_block(0, block(2, 600), SimTime{0});
    EXPECT_EQ(r.status, TierStatus::needs_eviction);
    EXPECT_EQ(r.bytes_short, 200u);
    EXPECT_EQ(h.used_bytes(0), 600u);
    EXPECT_EQ(h.write_block(1, block(1, 600), SimTime{0}).status, TierStatus::illegal_state);
    EXPECT_TRUE(h.read_block(0, 1, SimTime{5}).has_value());
    EXPECT_FALSE(h.read_block(1, 1, SimTime{5}).has_value());
    EXPECT_EQ(h.locate(1), Residency(0));
    EXPECT_TRUE(h.evict(0, 1).has_value());
    EXPECT_FALSE(h.locate(1).has_value());
    const auto st = h.stats();
    EXPECT_EQ(st[0].hit_count, 1u);
    EXPECT_EQ(st[1].miss_count, 1u);
    h.check_invariants();
}

TEST(Hierarchy, PromotionKeepsSourceReadableUntilCompletion) {
    TierHierarchy h(tiny(1'000'000));
    ASSERT_TRUE(h.write_block(3, block(7, 500'000), SimTime{0}).ok());
    const auto r = h.promote(7, 3, 0, SimTime{100});
    ASSERT_TRUE(r.ok());
    const auto& s = h.spec(3);
    const auto& d = h.spec(0);
    EXPECT_EQ(r.completion, SimTime{100} + transfer_time(s, 500'000) + transfer_time(d, 500'000));
    EXPECT_TRUE(h.in_flight(7));
    EXPECT_TRUE(h.contains(3, 7));
    EXPECT_TRUE(h.contains(0, 7));
    EXPECT_EQ(h.locate(7), Residency(0));
    EXPECT_FALSE(h.read_block(0, 7, SimTime{101}).has_value());
    EXPECT_TRUE(h.read_block(3, 7, SimTime{101}).has_value());
    EXPECT_FALSE(h.evict(3, 7).has_value());
    h.check_invariants();
    h.advance(r.completion);
    EXPECT_FALSE(h.in_flight(7));
    EXPECT_FALSE(h.contains(3, 7));
    EXPECT_EQ(h.used_bytes(3), 0u);
    EXPECT_TRUE(h.read_block(0, 7, r.completion).has_value());
    h.check_invariants();
}

TEST(Hierarchy, DemotionReleasesSourceImmediately) {
    TierHierarchy h(tiny(1000));
    ASSERT_TRUE(h.write_block(0, block(1, 400), SimTime{0}).ok());
    ASSERT_TRUE(h.demote(1, 0, 2, SimTime{1}).ok());
    EXPECT_EQ(h.used_bytes(0), 0u);
    EXPECT_EQ(h.used_bytes(2), 400u);
    EXPECT_EQ(h.stats()[0].demotion_count, 1u);
    EXPECT_EQ(h.demote(1, 2, 1, SimTime{2}).status, TierStatus::illegal_state);
    EXPECT_EQ(h.promote(1, 2, 3, SimTime{2}).status, TierStatus::illegal_state);
}

TEST(Hierarchy, DisableRedistributesAndEnableRestores) {
    TierHierarchy h(tiny(1000));
    for (BlockId i = 0; i < 4; ++i) ASSERT_TRUE(h.write_block(1, block(i, 250), SimTime{0}).ok());
    const auto moved = h.disable_tier(1, SimTime{10});
    EXPECT_EQ(moved.size(), 4u);
    for (const auto& m : moved) {
        EXPECT_EQ(m.from_tier, 1);
        EXPECT_EQ(m.to_tier, 2);
    }
    EXPECT_EQ(h.write_block(1, block(9, 1), SimTime{11}).status, TierStatus::tier_disabled);
    EXPECT_THROW(h.read_block(1, 0, SimTime{11}), std::logic_error);
    h.check_invariants();
    const auto back = h.enable_tier(1, SimTime{20});
    EXPECT_EQ(back.size(), 4u);
    EXPECT_EQ(h.used_bytes(1), 1000u);
    h.check_invariants();
}

TEST(Hierarchy, DisableCascadesOnOverflow) {
    TierHierarchy h(tiny(1000));
    ASSERT_TRUE(h.write_block(2, block(100, 900), SimTime{0}).ok());
    for (BlockId i = 0; i < 4; ++i) ASSERT_TRUE(h.write_block(1, block(i, 250), SimTime{0}).ok());
    const auto moved = h.disable_tier(1, SimTime{10});
    std::map<int, int> dest;
    for (const auto& m : moved) dest[m.to_tier]++;
    EXPECT_EQ(dest[3], 4);
    h.check_invariants();
}

TEST(Hierarchy, IncrementalCheckAgreesWithFullScan) {
    std::mt19937_64 rng(5);
    TierHierarchy h(tiny(20'000));
    h.track_changes(true);
    SimTime now{0};
    for (int step = 0; step < 5000; ++step) {
        now += SimTime{1000};
        h.advance(now);
        const BlockId id = rng() % 300;
        const int op = static_cast<int>(rng() % 4);
        const auto loc = h.locate(id);
        if (!loc) {
            h.write_block(static_cast<int>(rng() % 6), block(id, 100 + rng() % 900), now);
        } else if (op == 0) {
            h.evict(*loc, id);
        } else if (op == 1 && *loc > 0) {
            h.promote(id, *loc, static_cast<int>(rng() % *loc), now);
        } else if (*loc < 5) {
            h.demote(id, *loc, *loc + 1 + static_cast<int>(rng() % (5 - *loc)), now);
        }
        ASSERT_NO_THROW(h.check_recent_invariants());
        if (step % 500 == 0) ASSERT_NO_THROW(h.check_invariants());
    }
}

TEST(Hierarchy, IncrementalCheckRequiresTracking) {
    TierHierarchy h;
    EXPECT_THROW(h.check_recent_invariants(), std::logic_error);
}

TEST(HashRing, DeterministicAndBalanced) {
    HashRing a(8), b(8);
    std::vector<int> counts(8);
    for (std::uint64_t k = 0; k < 80'000; ++k) {
        EXPECT_EQ(a.node_for(k), b.node_for(k));
        counts[a.node_for(k)]++;
    }
    for (int c : counts) {
        EXPECT_GT(c, 10'000 * 0.6);
        EXPECT_LT(c, 10'000 * 1.4);
    }
    EXPECT_EQ(a.ring_size(), 8u * 64u);
}

TEST(HashRing, AddingANodeOnlyMovesKeysToIt) {
    HashRing before(8), after(9);
    int moved = 0;
    for (std::uint64_t k = 0; k < 50'000; ++k) {
        const auto x = before.node_for(k), y = after.node_for(k);
        if (x != y) {
            EXPECT_EQ(y, 8u);
            ++moved;
        }
    }
    EXPECT_GT(moved, 50'000 / 9 / 2);
    EXPECT_LT(moved, 50'000 / 9 * 2);
    EXPECT_THROW(HashRing(0), std::invalid_argument);
}
