// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <stdexcept>

#include "kvtier/tiers.hpp"

namespace kvtier {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

HashRing::HashRing(std::uint32_t num_nodes, std::uint32_t virtual_nodes_per_node)
    : num_nodes_(num_nodes) {
    if (num_nodes == 0 || virtual_nodes_per_node == 0)
        throw std::invalid_argument("hash ring needs at least one node and one virtual node");
    ring_.reserve(static_cast<std::size_t>(num_nodes) * virtual_nodes_per_node);
    for (std::uint32_t n = 0; n < num_nodes; ++n) {
        for (std::uint32_t v = 0; v < virtual_nodes_per_node; ++v) {
            ring_.emplace_back(splitmix64((static_cast<std::uint64_t>(n) << 32) | v), n);
        }
    }
    std::sort(ring_.begin(), ring_.end());
}

std::uint32_t HashRing::node_for(std::uint64_t key) const {
    const std::uint64_t h = splitmix64(key);
    auto it = std::lower_bound(ring_.begin(), ring_.end(), std::make_pair(h, std::uint32_t{0}));
    if (it == ring_.end()) it = ring_.begin();
    return it->second;
}

}  // namespace kvtier
