// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kvtier/core.hpp"

namespace kvtier {

struct PrefetchParams {
    std::uint32_t w_min = 1;
    std::uint32_t w_max = 8;
    bool enabled = true;
};

void validate(const PrefetchParams& params);

/// Linear ramp from w_min at layer 0 to w_max at the last layer, rounded half to even.
std::uint32_t window_for_layer(std::uint32_t layer, std::uint32_t num_layers,
                               const PrefetchParams& params);

/// Blocks intersecting [position, position + window * block_tokens] that sit in a
/// tier slower than 0, ordered by span start, at most `window` entries.
std::vector<BlockId> plan_prefetch(std::uint64_t position, std::uint32_t window,
                                   std::uint32_t block_tokens, std::span<const BlockMeta> blocks);

std::vector<BlockId> plan_prefetch(std::uint64_t position, std::uint32_t layer,
                                   std::uint32_t num_layers, std::uint32_t block_tokens,
                                   std::span<const BlockMeta> blocks, const PrefetchParams& params);

}  // namespace kvtier
