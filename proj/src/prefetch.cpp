// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/prefetch.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace kvtier {

void validate(const PrefetchParams& params) {
    if (params.w_min < 1 || params.w_min > params.w_max)
        throw std::invalid_argument("prefetch window needs 1 <= w_min <= w_max");
}

std::uint32_t window_for_layer(std::uint32_t layer, std::uint32_t num_layers,
                               const PrefetchParams& params) {
    validate(params);
    if (num_layers == 0 || layer >= num_layers) throw std::out_of_range("layer out of range");
    if (num_layers == 1) return params.w_max;
    const std::uint64_t den = num_layers - 1;
    const std::uint64_t num =
        static_cast<std::uint64_t>(params.w_min) * den + static_cast<std::uint64_t>(params.w_max - params.w_min) * layer;
    std::uint64_t q = num / den;
    const std::uint64_t r2 = 2 * (num % den);
    if (r2 > den || (r2 == den && (q % 2 == 1))) ++q;
    return static_cast<std::uint32_t>(q);
}

std::vector<BlockId> plan_prefetch(std::uint64_t position, std::uint32_t window,
                                   std::uint32_t block_tokens, std::span<const BlockMeta> blocks) {
    const std::uint64_t hi = position + static_cast<std::uint64_t>(window) * block_tokens;
    std::vector<const BlockMeta*> picked;
    for (const auto& b : blocks) {
        if (!b.resident_tier || *b.resident_tier == 0) continue;
        if (b.token_span.intersects(position, hi)) picked.push_back(&b);
    }
    std::sort(picked.begin(), picked.end(), [](const BlockMeta* a, const BlockMeta* b) {
        return std::tie(a->token_span.start, a->block_id) < std::tie(b->token_span.start, b->block_id);
    });
    if (picked.size() > window) picked.resize(window);
    std::vector<BlockId> out;
    out.reserve(picked.size());
    for (const auto* b : picked) out.push_back(b->block_id);
    return out;
}

std::vector<BlockId> plan_prefetch(std::uint64_t position, std::uint32_t layer,
                                   std::uint32_t num_layers, std::uint32_t block_tokens,
                                   std::span<const BlockMeta> blocks, const PrefetchParams& params) {
    if (!params.enabled) return {};
    return plan_prefetch(position, window_for_layer(layer, num_layers, params), block_tokens, blocks);
}

}  // namespace kvtier
