// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "kvtier/projection.hpp"
#include "kvtier/replay.hpp"

using namespace kvtier;

namespace {

HitMix all_t0() {
    HitMix m{};
    m[0] = 1.0;
    return m;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Projection, MixValidation) {
    EXPECT_NO_THROW(validate_mix(all_t0()));
    HitMix over{};
    over[0] = 0.7;
    over[1] = 0.5;
    EXPECT_ANY_THROW(validate_mix(over));
    HitMix neg{};
    neg[2] = -0.1;
    EXPECT_ANY_THROW(validate_mix(neg));
}

TEST(Projection, MixFromMetrics) {
    ReplayMetrics m;
    m.accesses = 10;
    m.hits[0] = 5;
    m.hits[3] = 2;
    const auto mix = mix_from_metrics(m);
    EXPECT_DOUBLE_EQ(mix[0], 0.5);
    EXPECT_DOUBLE_EQ(mix[3], 0.2);
    EXPECT_DOUBLE_EQ(mix[1], 0.0);
}

TEST(Projection, AllHbmScalesWithBatchUpToSaturation) {
    ProjectionInputs in;
    in.calibration.anchor_mix = all_t0();
    in.hit_fractions = all_t0();
    in.anchor_batch_size = 22;
    for (std::uint64_t b : {11u, 22u, 44u, 220u}) {
        in.batch_size = b;
        const double want = std::min(in.calibration.saturation_throughput, in.anchor.throughput * b / 22.0);
        EXPECT_NEAR(project_throughput(in), want, 1e-9 * want) << b;
    }
}

TEST(Projection, SlowerMixLowersThroughputAndRaisesLatency) {
    const auto c = fit_calibration();
    auto in = calibrated_inputs(c, reference_model("Llama-3-70B"));
    const double fast = project_throughput(in);
    const auto fast_ttft = project_ttft(in);
    HitMix slow{};
    slow[4] = 0.5;
    in.hit_fractions = slow;
    EXPECT_LT(project_throughput(in), fast);
    EXPECT_GT(project_ttft(in).p99_s, fast_ttft.p99_s);
    EXPECT_GT(project_tbt(in), 0.0);
    EXPECT_THROW(project_cost(in, 0.0), std::invalid_argument);
}

TEST(Projection, CapacityLabels) {
    auto tiers = default_tier_specs();
    std::vector<TierSpec> hbm(tiers.begin(), tiers.begin() + 1);
    EXPECT_EQ(capacity_label(project_capacity(hbm)), "40 GB");
    std::vector<TierSpec> two(tiers.begin(), tiers.begin() + 2);
    EXPECT_EQ(capacity_label(project_capacity(two)), "200 GB");
    const auto all = project_capacity(tiers);
    EXPECT_TRUE(all.open_ended);
    EXPECT_EQ(capacity_label(all), "38+ TB");
}

TEST(Projection, AblationWithoutFallbackIsZero) {
    auto in = calibrated_inputs(fit_calibration(), reference_model("Llama-3-70B"));
    in.fallback_mixes.clear();
    for (auto comp : {AblationComponent::bayesian, AblationComponent::head_eviction, AblationComponent::dedup,
                      AblationComponent::rope})
        EXPECT_DOUBLE_EQ(ablation(in, comp), 0.0) << to_string(comp);
    EXPECT_LT(ablation(in, AblationComponent::multitier), 0.0);
}

TEST(Projection, AblationTracksFallbackDegradation) {
    auto in = calibrated_inputs(fit_calibration(), reference_model("Llama-3-70B"));
    const auto full = in.hit_fractions;
    auto mild = full;
    mild[0] -= 0.05;
    auto severe = full;
    severe[0] -= 0.20;
    in.fallback_mixes[AblationComponent::bayesian] = mild;
    const double sharegpt = ablation(in, AblationComponent::bayesian);
    in.fallback_mixes[AblationComponent::bayesian] = severe;
    const double agentic = ablation(in, AblationComponent::bayesian);
    EXPECT_LT(agentic, sharegpt);
    EXPECT_LT(sharegpt, 0.0);
}

TEST(Projection, SizingAblationUsesMhaBatch) {
    auto in = calibrated_inputs(fit_calibration(), reference_model("DeepSeek-V3"));
    EXPECT_LT(ablation(in, AblationComponent::sizing), -50.0);
}

TEST(Calibration, FitReproducesTierThroughputs) {
    const CalibrationTargets targets;
    const auto c = fit_calibration(targets);
    ASSERT_EQ(c.tier_rows.size(), targets.tier_throughputs.size() + 1);
    for (std::size_t i = 0; i < targets.tier_throughputs.size(); ++i) {
        auto in = calibrated_inputs(c, reference_model(c.model));
        in.hit_fractions = c.tier_rows[i + 1].mix;
        in.batch_size = in.anchor_batch_size;
        in.hierarchy.resize(c.tier_rows[i + 1].tiers_enabled);
        EXPECT_NEAR(project_throughput(in), targets.tier_throughputs[i].second, 1e-6) << i;
    }
    const auto full = calibrated_inputs(c, reference_model(c.model));
    const auto ttft = project_ttft(full);
    EXPECT_NEAR(ttft.p50_s, targets.full_ttft_p50_s, 1e-9);
    EXPECT_NEAR(ttft.p99_s, targets.full_ttft_p99_s, 1e-9);
}

TEST(Calibration, ImpossibleTargetThrows) {
    CalibrationTargets t;
    t.tier_throughputs = {{"+ CPU DRAM", 1e6}};
    EXPECT_THROW(fit_calibration(t), std::domain_error);
}

TEST(Calibration, JsonRoundTripAndShippedFile) {
    const auto c = fit_calibration();
    EXPECT_EQ(calibration_from_json(calibration_to_json(c)), c);
    const auto shipped = slurp(std::string(KVTIER_SOURCE_DIR) + "/config/calibration.json");
    EXPECT_EQ(calibration_from_json(shipped), c);
    EXPECT_ANY_THROW(calibration_from_json(R"({"bogus": 1})"));
}

TEST(Report, BuildsAllSections) {
    ReportSetup setup;
    setup.calibration = fit_calibration();
    const auto r = build_report(setup);
    EXPECT_EQ(r.tiers.size(), 6u);
    EXPECT_FALSE(r.sizing.empty());
    for (auto fmt : {ReportFormat::table, ReportFormat::csv, ReportFormat::json})
        EXPECT_FALSE(format_report(r, fmt).empty());
    EXPECT_EQ(parse_report_format("csv"), ReportFormat::csv);
    EXPECT_ANY_THROW(parse_report_format("xml"));
}
