// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvtier/core.hpp"

namespace kvtier {

/// Exact non-negative rational used for byte counts that may be fractional
/// (INT4 precision is half a byte per element).
class Rational {
public:
    constexpr Rational() = default;
    Rational(std::int64_t num, std::int64_t den = 1);

    /// Nearest rational with denominator dividing 10^6; rejects non-finite input.
    static Rational from_double(double v);

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
    std::uint64_t ceil() const;
    std::uint64_t floor() const;

    friend Rational operator*(const Rational& a, const Rational& b);
    friend Rational operator/(const Rational& a, const Rational& b);
    friend Rational operator+(const Rational& a, const Rational& b);
    friend bool operator==(const Rational& a, const Rational& b) = default;
    friend bool operator<(const Rational& a, const Rational& b);
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }

private:
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    std::string name;
    std::uint32_t num_layers = 1;
    std::uint32_t query_heads = 1;
    std::uint32_t kv_heads = 1;
    std::uint32_t head_dim = 1;
    std::optional<std::uint32_t> latent_dim;
    std::optional<std::uint32_t> rope_dim;
    Rational precision_bytes{2};
    std::uint32_t tp_degree = 1;
    /// Unset means the per-architecture default: MHA shards across TP ranks,
    /// GQA/MQA/MLA caches are replicated.
    std::optional<bool> kv_shard_under_tp;
};

struct SizingBudget {
    std::uint64_t m_target_bytes = 0;
    std::uint64_t n_max = 0;
};

/// Throws ConfigError naming the model when invariants are violated.
void validate(const ModelConfig& cfg);
void validate(const SizingBudget& budget);

ArchitectureKind infer_architecture(const ModelConfig& cfg);

/// Whether the KV cache divides by tp_degree for this config.
bool shards_kv(const ModelConfig& cfg);

/// Bytes per token per layer before tensor-parallel sharding.
Rational bytes_per_token_layer(const ModelConfig& cfg);

/// Bytes per token per layer held by one rank after applying the sharding policy.
Rational rank_bytes_per_token_layer(const ModelConfig& cfg);

/// L * n * rank bytes per token/layer, rounded up to whole bytes.
std::uint64_t sequence_kv_bytes(const ModelConfig& cfg, std::uint64_t n_tokens);

/// floor(M_target / (L * B(n_max))); 0 when a single sequence does not fit.
std::uint64_t max_batch_size(const ModelConfig& cfg, const SizingBudget& budget);

/// The same model sized as if every query head had its own KV head.
ModelConfig mha_equivalent(const ModelConfig& cfg);

struct FleetRow {
    std::string name;
    ArchitectureKind arch = ArchitectureKind::MHA;
    Rational mha_bytes_per_token_layer;
    Rational actual_bytes_per_token_layer;
    double ratio = 1.0;
    std::uint64_t mha_batch = 0;
    std::uint64_t arch_batch = 0;
};

std::vector<FleetRow> fleet_report(const std::vector<ModelConfig>& cfgs, const SizingBudget& budget);

/// Reference configurations: DeepSeek-V3, Llama-3-70B, Mixtral-8x22B, Qwen-2.5-72B (BF16, TP-8).
std::vector<ModelConfig> reference_models();
ModelConfig reference_model(const std::string& name);

/// 30e9-byte KV budget with n_max = 4096.
SizingBudget reference_budget();

}  // namespace kvtier
