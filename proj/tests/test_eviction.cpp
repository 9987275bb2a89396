// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "kvtier/eviction.hpp"

using namespace kvtier;

TEST(Eviction, ObservationWeight) {
    EvictionParams p;
    EXPECT_DOUBLE_EQ(observation_weight(0, p), 1.0);
    EXPECT_NEAR(observation_weight(p.position_decay_tau, p), std::exp(-1.0), 1e-12);
    p.position_decay_tau = std::numeric_limits<double>::infinity();
    EXPECT_DOUBLE_EQ(observation_weight(1e9, p), 1.0);
}

TEST(Eviction, EmaUpdate) {
    ImportanceMatrix m(ArchitectureKind::MHA, 4, 8, 8);
    EvictionParams p;
    p.ema_decay = 0.5;
    m.record_access(0, 3, 0, p);
    EXPECT_DOUBLE_EQ(m.score(0, 3), 0.5);
    // s = 0.5 then w = 1 gives 0.75; starting from 0.4 would give 0.7.
    m.record_access(0, 3, 0, p);
    EXPECT_DOUBLE_EQ(m.score(0, 3), 0.75);
    EXPECT_DOUBLE_EQ(m.score(0, 2), 0.0);
    ImportanceMatrix n(ArchitectureKind::MHA, 1, 1, 1);
    p.ema_decay = 0.8;
    for (int i = 0; i < 2; ++i) n.record_access(0, 0, 0, p);
    // (1-0.8) then 0.8*0.2 + 0.2.
    EXPECT_NEAR(n.score(0, 0), 0.36, 1e-12);
}

TEST(Eviction, FarObservationsDecayScore) {
    ImportanceMatrix m(ArchitectureKind::MHA, 1, 1, 1);
    EvictionParams p;
    m.record_access(0, 0, 0, p);
    double prev = m.score(0, 0);
    for (int i = 0; i < 10; ++i) {
        m.record_access(0, 0, 1e9, p);
        EXPECT_LT(m.score(0, 0), prev);
        prev = m.score(0, 0);
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(Eviction, GqaGroupTakesMaxOfQueryHeads) {
    ImportanceMatrix m(ArchitectureKind::GQA, 1, 8, 2);
    EXPECT_EQ(m.group_size(), 4u);
    EXPECT_EQ(m.kv_head_for(5), 1u);
    EvictionParams p;
    p.ema_decay = 0.5;
    const std::pair<std::uint32_t, double> step[] = {{0, 1e9}, {1, 0.0}, {2, 5000.0}};
    m.record_step(0, step, p);
    EXPECT_DOUBLE_EQ(m.score(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(m.score(0, 1), 0.0);
}

TEST(Eviction, HeadWeights) {
    ImportanceMatrix mha(ArchitectureKind::MHA, 1, 8, 8);
    EXPECT_DOUBLE_EQ(mha.head_weight(0), 1.0 / 8.0);
    ImportanceMatrix gqa(ArchitectureKind::GQA, 1, 64, 8);
    EXPECT_DOUBLE_EQ(gqa.head_weight(0), 8.0 / 64.0);
    ImportanceMatrix mla(ArchitectureKind::MLA, 1, 128, 128);
    EXPECT_EQ(mla.num_kv_heads(), 1u);
    EXPECT_DOUBLE_EQ(mla.head_weight(0), 1.0);
}

TEST(Eviction, BlockScoreClosedForm) {
    ImportanceMatrix zero(ArchitectureKind::MHA, 6, 4, 4);
    EXPECT_DOUBLE_EQ(zero.block_score(LayerSet::all(6)), 0.0);
    // Every head sees the same distance once: uniform s = 1 - lambda.
    ImportanceMatrix m(ArchitectureKind::MHA, 6, 4, 4);
    EvictionParams p;
    m.record_block_access(LayerSet::all(6), 0, p);
    const double s = 1.0 - p.ema_decay;
    EXPECT_NEAR(m.block_score(LayerSet{1, 3}), 3 * s, 1e-12);
    EXPECT_NEAR(m.block_score(LayerSet::all(6)), 6 * s, 1e-12);
}

TEST(Eviction, TransitionMultipliersReplaceNotAccumulate) {
    ImportanceMatrix m(ArchitectureKind::MHA, 6, 2, 2);
    EvictionParams p;
    m.record_block_access(LayerSet::all(6), 0, p);
    const LayerSet late{4, 2};
    const double before = m.block_score(late);
    const auto table = MultiplierTable::defaults();
    m.apply_transition_multipliers(TransitionType::agent_handoff, table);
    EXPECT_NEAR(m.block_score(late), before * 0.5, 1e-12);
    m.apply_transition_multipliers(TransitionType::agent_handoff, table);
    EXPECT_NEAR(m.block_score(late), before * 0.5, 1e-12);
    m.apply_transition_multipliers(TransitionType::reasoning_step, table);
    EXPECT_NEAR(m.block_score(late), before, 1e-12);
    const auto copy = m;
    m.apply_transition_multipliers(TransitionType::tool_switch, MultiplierTable::identity());
    EXPECT_EQ(m, copy);
    MultiplierTable sparse;
    m.apply_transition_multipliers(TransitionType::tool_switch, sparse);
    EXPECT_EQ(m.missing_entry_warnings(), 1u);
}

TEST(Eviction, LayerBands) {
    ImportanceMatrix m(ArchitectureKind::MHA, 9, 1, 1);
    EXPECT_EQ(m.band_of(0), LayerBand::early);
    EXPECT_EQ(m.band_of(4), LayerBand::middle);
    EXPECT_EQ(m.band_of(8), LayerBand::late);
}

TEST(Eviction, VictimSelection) {
    ImportanceMatrix m(ArchitectureKind::MHA, 4, 1, 1);
    EvictionParams p;
    m.record_access(0, 0, 0, p);
    m.record_access(1, 0, 0, p);
    m.record_access(1, 0, 0, p);
    std::vector<BlockMeta> c(2);
    c[0].block_id = 10;
    c[0].layer_set = LayerSet::single(1);
    c[1].block_id = 11;
    c[1].layer_set = LayerSet::single(0);
    EXPECT_EQ(select_victim(m, c), 11u);
    EXPECT_EQ(select_victim(m, std::span(c).first(1)), 10u);
    // Exact tie on score and last access: smaller id.
    std::vector<BlockMeta> tie(2);
    tie[0].block_id = 9;
    tie[1].block_id = 4;
    tie[0].layer_set = tie[1].layer_set = LayerSet::single(3);
    EXPECT_EQ(select_victim(m, tie), 4u);
    tie[0].last_access = SimTime{1};
    tie[1].last_access = SimTime{2};
    EXPECT_EQ(select_victim(m, tie), 9u);
    EXPECT_THROW(select_victim(m, std::span<const BlockMeta>{}), EmptyCandidates);
}

TEST(Eviction, CsvDump) {
    ImportanceMatrix m(ArchitectureKind::GQA, 2, 4, 2);
    const auto csv = m.dump_csv();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Eviction, ParamValidation) {
    EvictionParams p;
    p.ema_decay = 1.0;
    EXPECT_THROW(validate(p), std::invalid_argument);
    p.ema_decay = 0.5;
    p.position_decay_tau = 0;
    EXPECT_THROW(validate(p), std::invalid_argument);
}
