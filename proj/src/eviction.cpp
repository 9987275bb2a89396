// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/eviction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace kvtier {

void validate(const EvictionParams& params) {
    if (!(params.ema_decay > 0.0 && params.ema_decay < 1.0))
        throw std::invalid_argument("ema_decay must lie in (0, 1)");
    if (!(params.position_decay_tau > 0.0))
        throw std::invalid_argument("position_decay_tau must be positive");
}

double observation_weight(double distance_tokens, const EvictionParams& params) {
    if (std::isinf(params.position_decay_tau)) return 1.0;
    return std::exp(-std::max(0.0, distance_tokens) / params.position_decay_tau);
}

MultiplierTable MultiplierTable::defaults() {
    MultiplierTable t;
    t.bands[TransitionType::same_tool_repeat] = {1.0, 1.0, 1.0};
    t.bands[TransitionType::reasoning_step] = {1.0, 1.0, 1.0};
    t.bands[TransitionType::tool_switch] = {1.0, 0.8, 1.0};
    t.bands[TransitionType::agent_handoff] = {1.0, 1.0, 0.5};
    return t;
}

MultiplierTable MultiplierTable::identity() {
    MultiplierTable t;
    for (auto tt : kAllTransitionTypes) t.bands[tt] = {1.0, 1.0, 1.0};
    return t;
}

ImportanceMatrix::ImportanceMatrix(ArchitectureKind arch, std::uint32_t num_layers,
                                   std::uint32_t query_heads, std::uint32_t kv_heads)
    : arch_(arch),
      num_layers_(num_layers),
      query_heads_(query_heads),
      num_kv_heads_(arch == ArchitectureKind::MLA ? 1 : kv_heads) {
    if (num_layers == 0 || query_heads == 0 || num_kv_heads_ == 0)
        throw std::invalid_argument("importance matrix dimensions must be positive");
    if (query_heads_ % num_kv_heads_ != 0)
        throw std::invalid_argument("query heads must be a multiple of stored heads");
    scores_.assign(static_cast<std::size_t>(num_layers_) * num_kv_heads_, 0.0);
    multipliers_.assign(scores_.size(), 1.0);
}

ImportanceMatrix ImportanceMatrix::for_model(const ModelConfig& cfg) {
    return ImportanceMatrix(infer_architecture(cfg), cfg.num_layers, cfg.query_heads, cfg.kv_heads);
}

std::size_t ImportanceMatrix::at(std::uint32_t layer, std::uint32_t head) const {
    if (layer >= num_layers_ || head >= num_kv_heads_)
        throw std::out_of_range("importance matrix index out of range");
    return static_cast<std::size_t>(layer) * num_kv_heads_ + head;
}

double ImportanceMatrix::score(std::uint32_t layer, std::uint32_t head) const {
    return scores_[at(layer, head)];
}

double ImportanceMatrix::multiplier(std::uint32_t layer, std::uint32_t head) const {
    return multipliers_[at(layer, head)];
}

double ImportanceMatrix::head_weight(std::uint32_t head) const {
    if (head >= num_kv_heads_) throw std::out_of_range("head index out of range");
    switch (arch_) {
        case ArchitectureKind::MLA: return 1.0;
        case ArchitectureKind::MHA: return 1.0 / static_cast<double>(num_kv_heads_);
        case ArchitectureKind::GQA:
        case ArchitectureKind::MQA:
            return static_cast<double>(group_size()) / static_cast<double>(query_heads_);
    }
    return 1.0;
}

std::uint32_t ImportanceMatrix::kv_head_for(std::uint32_t query_head) const {
    if (query_head >= query_heads_) throw std::out_of_range("query head out of range");
    return query_head / group_size();
}

LayerBand ImportanceMatrix::band_of(std::uint32_t layer) const {
    if (layer >= num_layers_) throw std::out_of_range("layer out of range");
    const std::uint64_t scaled = static_cast<std::uint64_t>(layer) * 3 / num_layers_;
    return static_cast<LayerBand>(scaled);
}

void ImportanceMatrix::record_step(std::uint32_t layer,
                                   std::span<const std::pair<std::uint32_t, double>> accesses,
                                   const EvictionParams& params) {
    const double lambda = params.ema_decay;
    std::vector<std::pair<std::uint32_t, double>> proposals;
    proposals.reserve(accesses.size());
    for (const auto& [query_head, distance] : accesses) {
        const std::uint32_t head = kv_head_for(query_head);
        const double s = scores_[at(layer, head)];
        proposals.emplace_back(head, lambda * s + (1.0 - lambda) * observation_weight(distance, params));
    }
    std::sort(proposals.begin(), proposals.end());
    for (std::size_t i = 0; i < proposals.size();) {
        std::size_t j = i;
        double best = proposals[i].second;
        while (j < proposals.size() && proposals[j].first == proposals[i].first) {
            best = std::max(best, proposals[j].second);
            ++j;
        }
        scores_[at(layer, proposals[i].first)] = best;
        i = j;
    }
}

void ImportanceMatrix::record_access(std::uint32_t layer, std::uint32_t query_head,
                                     double distance_tokens, const EvictionParams& params) {
    const std::pair<std::uint32_t, double> one{query_head, distance_tokens};
    record_step(layer, std::span(&one, 1), params);
}

void ImportanceMatrix::record_block_access(const LayerSet& layers, double distance_tokens,
                                           const EvictionParams& params) {
    if (layers.end() > num_layers_) throw std::out_of_range("layer set exceeds matrix");
    const double lambda = params.ema_decay;
    const double w = observation_weight(distance_tokens, params);
    for (std::uint32_t l = layers.first; l < layers.end(); ++l) {
        for (std::uint32_t h = 0; h < num_kv_heads_; ++h) {
            double& s = scores_[at(l, h)];
            s = lambda * s + (1.0 - lambda) * w;
        }
    }
}

void ImportanceMatrix::apply_transition_multipliers(TransitionType transition,
                                                    const MultiplierTable& table) {
    std::array<double, 3> bands{1.0, 1.0, 1.0};
    auto it = table.bands.find(transition);
    if (it == table.bands.end())
        missing_entry_warnings_++;
    else
        bands = it->second;
    for (double m : bands) {
        if (!(m > 0)) throw std::invalid_argument("multipliers must be positive");
    }
    for (std::uint32_t l = 0; l < num_layers_; ++l) {
        const double m = bands[static_cast<std::size_t>(band_of(l))];
        for (std::uint32_t h = 0; h < num_kv_heads_; ++h) multipliers_[at(l, h)] = m;
    }
}

double ImportanceMatrix::block_score(const LayerSet& layers) const {
    if (layers.end() > num_layers_) throw std::out_of_range("layer set exceeds matrix");
    double total = 0.0;
    for (std::uint32_t l = layers.first; l < layers.end(); ++l) {
        for (std::uint32_t h = 0; h < num_kv_heads_; ++h) {
            const std::size_t i = at(l, h);
            total += head_weight(h) * multipliers_[i] * scores_[i];
        }
    }
    return total;
}

std::string ImportanceMatrix::dump_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "layer,head,score\n";
    for (std::uint32_t l = 0; l < num_layers_; ++l) {
        for (std::uint32_t h = 0; h < num_kv_heads_; ++h) out << l << ',' << h << ',' << score(l, h) << '\n';
    }
    return out.str();
}

BlockId select_victim(const ImportanceMatrix& matrix, std::span<const BlockMeta> candidates) {
    if (candidates.empty()) throw EmptyCandidates();
    const BlockMeta* best = nullptr;
    double best_score = 0.0;
    for (const auto& c : candidates) {
        const double s = matrix.block_score(c);
        if (!best || std::tie(s, c.last_access, c.block_id) <
                         std::tie(best_score, best->last_access, best->block_id)) {
            best = &c;
            best_score = s;
        }
    }
    return best->block_id;
}

}  // namespace kvtier
