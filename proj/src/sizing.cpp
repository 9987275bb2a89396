// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/sizing.hpp"

#include <cmath>
#include <numeric>

namespace kvtier {

namespace {

using i128 = __int128;

Rational make_reduced(i128 num, i128 den) {
    if (den == 0) throw std::domain_error("rational with zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    i128 a = num < 0 ? -num : num;
    i128 b = den;
    while (b != 0) {
        i128 t = a % b;
        a = b;
        b = t;
    }
    if (a > 1) {
        num /= a;
        den /= a;
    }
    constexpr i128 limit = std::numeric_limits<std::int64_t>::max();
    if (num > limit || num < -limit || den > limit) throw std::overflow_error("rational overflow");
    return Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

std::string model_label(const ModelConfig& cfg) {
    return cfg.name.empty() ? std::string("<unnamed>") : cfg.name;
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) : num_(num), den_(den) {
    if (den == 0) throw std::domain_error("rational with zero denominator");
    if (den_ < 0) {
        num_ = -num_;
        den_ = -den_;
    }
    std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
        num_ /= g;
        den_ /= g;
    }
}

Rational Rational::from_double(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite rational");
    constexpr std::int64_t scale = 1'000'000;
    return Rational(static_cast<std::int64_t>(std::llround(v * scale)), scale);
}

std::uint64_t Rational::ceil() const {
    if (num_ <= 0) return 0;
    return static_cast<std::uint64_t>((num_ + den_ - 1) / den_);
}

std::uint64_t Rational::floor() const {
    if (num_ <= 0) return 0;
    return static_cast<std::uint64_t>(num_ / den_);
}

Rational operator*(const Rational& a, const Rational& b) {
    return make_reduced(static_cast<i128>(a.num_) * b.num_, static_cast<i128>(a.den_) * b.den_);
}

Rational operator/(const Rational& a, const Rational& b) {
    return make_reduced(static_cast<i128>(a.num_) * b.den_, static_cast<i128>(a.den_) * b.num_);
}

Rational operator+(const Rational& a, const Rational& b) {
    return make_reduced(static_cast<i128>(a.num_) * b.den_ + static_cast<i128>(b.num_) * a.den_,
                        static_cast<i128>(a.den_) * b.den_);
}

bool operator<(const Rational& a, const Rational& b) {
    return static_cast<i128>(a.num_) * b.den_ < static_cast<i128>(b.num_) * a.den_;
}

void validate(const ModelConfig& cfg) {
    auto fail = [&](const std::string& why) {
        throw ConfigError("model '" + model_label(cfg) + "': " + why);
    };
    if (cfg.num_layers == 0) fail("num_layers must be positive");
    if (cfg.query_heads == 0) fail("query_heads must be positive");
    if (cfg.kv_heads == 0) fail("kv_heads must be positive");
    if (cfg.head_dim == 0) fail("head_dim must be positive");
    if (cfg.tp_degree == 0) fail("tp_degree must be positive");
    if (cfg.kv_heads > cfg.query_heads) fail("kv_heads exceeds query_heads");
    if (cfg.query_heads % cfg.kv_heads != 0) fail("query_heads must be a multiple of kv_heads");
    if (cfg.latent_dim && !cfg.rope_dim) fail("latent_dim requires rope_dim");
    if (cfg.precision_bytes.num() <= 0) fail("precision_bytes must be positive");
}

void validate(const SizingBudget& budget) {
    if (budget.m_target_bytes == 0) throw ConfigError("m_target_bytes must be positive");
    if (budget.n_max == 0) throw ConfigError("n_max must be positive");
}

ArchitectureKind infer_architecture(const ModelConfig& cfg) {
    validate(cfg);
    if (cfg.latent_dim) return ArchitectureKind::MLA;
    if (cfg.kv_heads == cfg.query_heads) return ArchitectureKind::MHA;
    if (cfg.kv_heads == 1) return ArchitectureKind::MQA;
    return ArchitectureKind::GQA;
}

bool shards_kv(const ModelConfig& cfg) {
    if (cfg.kv_shard_under_tp) return *cfg.kv_shard_under_tp;
    return infer_architecture(cfg) == ArchitectureKind::MHA;
}

Rational bytes_per_token_layer(const ModelConfig& cfg) {
    const Rational& p = cfg.precision_bytes;
    switch (infer_architecture(cfg)) {
        case ArchitectureKind::MHA:
            return Rational(2LL * cfg.query_heads * cfg.head_dim) * p;
        case ArchitectureKind::GQA:
        case ArchitectureKind::MQA:
            return Rational(2LL * cfg.kv_heads * cfg.head_dim) * p;
        case ArchitectureKind::MLA:
            return Rational(static_cast<std::int64_t>(*cfg.latent_dim) + *cfg.rope_dim) * p;
    }
    return {};
}

Rational rank_bytes_per_token_layer(const ModelConfig& cfg) {
    Rational b = bytes_per_token_layer(cfg);
    if (shards_kv(cfg) && cfg.tp_degree > 1) b = b / Rational(cfg.tp_degree);
    return b;
}

std::uint64_t sequence_kv_bytes(const ModelConfig& cfg, std::uint64_t n_tokens) {
    return (Rational(cfg.num_layers) * Rational(static_cast<std::int64_t>(n_tokens)) *
            rank_bytes_per_token_layer(cfg))
        .ceil();
}

std::uint64_t max_batch_size(const ModelConfig& cfg, const SizingBudget& budget) {
    validate(budget);
    Rational per_sequence = Rational(cfg.num_layers) *
                            Rational(static_cast<std::int64_t>(budget.n_max)) *
                            rank_bytes_per_token_layer(cfg);
    return (Rational(static_cast<std::int64_t>(budget.m_target_bytes)) / per_sequence).floor();
}

ModelConfig mha_equivalent(const ModelConfig& cfg) {
    ModelConfig out = cfg;
    out.kv_heads = cfg.query_heads;
    out.latent_dim.reset();
    out.rope_dim.reset();
    out.kv_shard_under_tp.reset();
    return out;
}

std::vector<FleetRow> fleet_report(const std::vector<ModelConfig>& cfgs, const SizingBudget& budget) {
    if (cfgs.empty()) throw ConfigError("fleet report needs at least one model");
    validate(budget);
    std::vector<FleetRow> rows;
    rows.reserve(cfgs.size());
    for (const auto& cfg : cfgs) {
        try {
            FleetRow row;
            row.name = cfg.name;
            row.arch = infer_architecture(cfg);
            ModelConfig mha = mha_equivalent(cfg);
            row.mha_bytes_per_token_layer = bytes_per_token_layer(mha);
            row.actual_bytes_per_token_layer = bytes_per_token_layer(cfg);
            row.ratio = (row.mha_bytes_per_token_layer / row.actual_bytes_per_token_layer).to_double();
            row.mha_batch = max_batch_size(mha, budget);
            row.arch_batch = max_batch_size(cfg, budget);
            rows.push_back(std::move(row));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("model '" + model_label(cfg) + "': " + e.what());
        }
    }
    return rows;
}

std::vector<ModelConfig> reference_models() {
    ModelConfig dsv3;
    dsv3.name = "DeepSeek-V3";
    dsv3.num_layers = 61;
    dsv3.query_heads = 128;
    dsv3.kv_heads = 128;
    dsv3.head_dim = 128;
    dsv3.latent_dim = 512;
    dsv3.rope_dim = 64;
    dsv3.tp_degree = 8;

    ModelConfig llama;
    llama.name = "Llama-3-70B";
    llama.num_layers = 80;
    llama.query_heads = 64;
    llama.kv_heads = 8;
    llama.head_dim = 128;
    llama.tp_degree = 8;

    ModelConfig mixtral;
    mixtral.name = "Mixtral-8x22B";
    mixtral.num_layers = 56;
    mixtral.query_heads = 48;
    mixtral.kv_heads = 8;
    mixtral.head_dim = 128;
    mixtral.tp_degree = 8;

    ModelConfig qwen = llama;
    qwen.name = "Qwen-2.5-72B";

    return {dsv3, llama, mixtral, qwen};
}

ModelConfig reference_model(const std::string& name) {
    for (auto& m : reference_models()) {
        if (m.name == name) return m;
    }
    throw ConfigError("unknown reference model '" + name + "'");
}

SizingBudget reference_budget() { return {30'000'000'000ULL, 4096}; }

}  // namespace kvtier
