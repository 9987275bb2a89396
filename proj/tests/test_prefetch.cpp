// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "kvtier/prefetch.hpp"

using namespace kvtier;

namespace {

std::vector<BlockMeta> blocks(int n, int tier, std::uint64_t tokens = 128) {
    std::vector<BlockMeta> out(n);
    for (int i = 0; i < n; ++i) {
        out[i].block_id = 100 + i;
        out[i].token_span = {i * tokens, (i + 1) * tokens};
        out[i].resident_tier = tier;
    }
    return out;
}

}  // namespace

TEST(Prefetch, WindowRamp) {
    PrefetchParams p{1, 8, true};
    EXPECT_EQ(window_for_layer(0, 80, p), 1u);
    EXPECT_EQ(window_for_layer(79, 80, p), 8u);
    // Midpoint of a 3-layer stack is 4.5, which rounds half to even.
    EXPECT_EQ(window_for_layer(1, 3, p), 4u);
    PrefetchParams q{2, 9, true};
    EXPECT_EQ(window_for_layer(1, 3, q), 6u);
    std::uint32_t prev = 0;
    for (std::uint32_t l = 0; l < 80; ++l) {
        const auto w = window_for_layer(l, 80, p);
        EXPECT_GE(w, prev);
        prev = w;
    }
}

TEST(Prefetch, AllInTierZeroGivesEmptyPlan) {
    EXPECT_TRUE(plan_prefetch(0, 4, 128, blocks(8, 0)).empty());
}

TEST(Prefetch, PlansUpcomingSlowBlocksInOrder) {
    auto b = blocks(8, 0);
    b[3].resident_tier = 2;
    b[2].resident_tier = 2;
    b[6].resident_tier = 1;
    // Position 256 is the start of block 2; a window of 2 reaches token 512.
    const auto plan = plan_prefetch(256, 2, 128, b);
    EXPECT_EQ(plan, (std::vector<BlockId>{102, 103}));
}

TEST(Prefetch, CapsAtWindowEntries) {
    const auto plan = plan_prefetch(0, 3, 128, blocks(10, 1));
    EXPECT_EQ(plan.size(), 3u);
    EXPECT_EQ(plan.front(), 100u);
}

TEST(Prefetch, LayerEndpoints) {
    PrefetchParams p{1, 8, true};
    const auto b = blocks(20, 3);
    EXPECT_EQ(plan_prefetch(0, 0, 80, 128, b, p).size(), 1u);
    EXPECT_EQ(plan_prefetch(0, 79, 80, 128, b, p).size(), 8u);
    p.enabled = false;
    EXPECT_TRUE(plan_prefetch(0, 79, 80, 128, b, p).empty());
}

TEST(Prefetch, NonResidentBlocksIgnored) {
    auto b = blocks(4, 2);
    b[0].resident_tier.reset();
    const auto plan = plan_prefetch(0, 4, 128, b);
    EXPECT_EQ(plan, (std::vector<BlockId>{101, 102, 103}));
}

TEST(Prefetch, Validation) {
    EXPECT_THROW(validate(PrefetchParams{0, 4, true}), std::invalid_argument);
    EXPECT_THROW(validate(PrefetchParams{5, 4, true}), std::invalid_argument);
}
