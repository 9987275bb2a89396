// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "kvtier/sizing.hpp"
#include "oracles.hpp"

using namespace kvtier;

namespace {

ModelConfig gqa(std::uint32_t layers, std::uint32_t hq, std::uint32_t hkv, std::uint32_t d) {
    ModelConfig m;
    m.name = "test";
    m.num_layers = layers;
    m.query_heads = hq;
    m.kv_heads = hkv;
    m.head_dim = d;
    return m;
}

}  // namespace

TEST(Rational, NormalizesAndCompares) {
    const Rational a(6, 4);
    EXPECT_EQ(a.num(), 3);
    EXPECT_EQ(a.den(), 2);
    EXPECT_EQ(Rational(1, 2) + Rational(1, 3), Rational(5, 6));
    EXPECT_EQ(Rational(2, 3) * Rational(3, 4), Rational(1, 2));
    EXPECT_EQ(Rational(1, 2) / Rational(1, 4), Rational(2));
    EXPECT_TRUE(Rational(1, 3) < Rational(1, 2));
    EXPECT_EQ(Rational(7, 2).ceil(), 4u);
    EXPECT_EQ(Rational(7, 2).floor(), 3u);
    EXPECT_THROW(Rational(1, 0), std::domain_error);
    EXPECT_EQ(Rational::from_double(0.5), Rational(1, 2));
    EXPECT_THROW(Rational::from_double(NAN), std::invalid_argument);
}

TEST(Sizing, GeometryOracleOnRandomConfigs) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const std::uint32_t hkv = 1u << (rng() % 4);
        const std::uint32_t hq = hkv * (1 + rng() % 8);
        const std::uint32_t d = 32 * (1 + rng() % 8);
        auto m = gqa(1 + rng() % 96, hq, hkv, d);
        EXPECT_DOUBLE_EQ(bytes_per_token_layer(m).to_double(), oracle::kv_bytes(hkv, d, 2.0));
    }
}

TEST(Sizing, LatentAttentionUsesLatentPlusRope) {
    auto m = gqa(61, 128, 128, 128);
    m.latent_dim = 512;
    m.rope_dim = 64;
    EXPECT_EQ(infer_architecture(m), ArchitectureKind::MLA);
    EXPECT_EQ(bytes_per_token_layer(m), Rational(1152));
}

TEST(Sizing, Int4PrecisionIsExactHalfBytes) {
    auto m = gqa(1, 8, 1, 3);
    m.precision_bytes = Rational(1, 2);
    EXPECT_EQ(bytes_per_token_layer(m), Rational(3));
    EXPECT_EQ(sequence_kv_bytes(m, 1), 3u);
    m.head_dim = 1;
    EXPECT_EQ(bytes_per_token_layer(m), Rational(1));
}

TEST(Sizing, ArchitectureInference) {
    EXPECT_EQ(infer_architecture(gqa(1, 8, 8, 64)), ArchitectureKind::MHA);
    EXPECT_EQ(infer_architecture(gqa(1, 8, 1, 64)), ArchitectureKind::MQA);
    EXPECT_EQ(infer_architecture(gqa(1, 8, 2, 64)), ArchitectureKind::GQA);
}

TEST(Sizing, ShardingPolicy) {
    auto mha = gqa(1, 8, 8, 64);
    mha.tp_degree = 8;
    EXPECT_TRUE(shards_kv(mha));
    EXPECT_EQ(rank_bytes_per_token_layer(mha), bytes_per_token_layer(mha) / Rational(8));
    auto g = gqa(1, 8, 2, 64);
    g.tp_degree = 8;
    EXPECT_FALSE(shards_kv(g));
    EXPECT_EQ(rank_bytes_per_token_layer(g), bytes_per_token_layer(g));
    g.kv_shard_under_tp = true;
    EXPECT_EQ(rank_bytes_per_token_layer(g), bytes_per_token_layer(g) / Rational(8));
}

TEST(Sizing, BatchSizeIsClosedFormFloor) {
    std::mt19937_64 rng(3);
    const SizingBudget budget{30'000'000'000ull, 4096};
    for (int i = 0; i < 100; ++i) {
        auto m = gqa(1 + rng() % 100, 64, 1u << (rng() % 7), 128);
        const double per_seq = m.num_layers * 4096.0 * rank_bytes_per_token_layer(m).to_double();
        EXPECT_EQ(max_batch_size(m, budget), static_cast<std::uint64_t>(std::floor(30e9 / per_seq)));
    }
}

TEST(Sizing, ZeroBatchWhenOneSequenceDoesNotFit) {
    const SizingBudget tiny{1000, 4096};
    EXPECT_EQ(max_batch_size(gqa(80, 64, 8, 128), tiny), 0u);
}

TEST(Sizing, ReferenceBatchSizes) {
    const auto budget = reference_budget();
    const auto rows = fleet_report(reference_models(), budget);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].name, "DeepSeek-V3");
    EXPECT_EQ(rows[0].mha_batch, 14u);
    EXPECT_EQ(rows[0].arch_batch, 104u);
    EXPECT_NEAR(rows[0].ratio, 65536.0 / 1152.0, 1e-9);
    EXPECT_EQ(rows[1].arch_batch, 22u);
    EXPECT_EQ(rows[1].mha_batch, 22u);
    EXPECT_EQ(rows[2].mha_batch, 42u);
    EXPECT_EQ(rows[2].arch_batch, 31u);
}

TEST(Sizing, SequenceBytesRoundUp) {
    auto m = gqa(3, 8, 1, 1);
    m.precision_bytes = Rational(1, 2);
    // 3 layers x 1 token x 1 byte.
    EXPECT_EQ(sequence_kv_bytes(m, 1), 3u);
    m.precision_bytes = Rational(1, 5);
    EXPECT_EQ(sequence_kv_bytes(m, 1), 2u);
}

TEST(Sizing, ValidationNamesModel) {
    auto m = gqa(80, 64, 7, 128);
    m.name = "odd";
    try {
        validate(m);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("odd"), std::string::npos);
    }
    EXPECT_THROW(validate(gqa(0, 8, 8, 8)), ConfigError);
    EXPECT_THROW(validate(SizingBudget{0, 1}), ConfigError);
    EXPECT_THROW(reference_model("GPT-9"), ConfigError);
}

TEST(Sizing, MhaEquivalentKeepsQueryGeometry) {
    const auto llama = reference_model("Llama-3-70B");
    const auto mha = mha_equivalent(llama);
    EXPECT_EQ(mha.kv_heads, llama.query_heads);
    EXPECT_EQ(infer_architecture(mha), ArchitectureKind::MHA);
    EXPECT_FALSE(mha.latent_dim.has_value());
}
