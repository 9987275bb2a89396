// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvtier/core.hpp"
#include "kvtier/sizing.hpp"

namespace kvtier {

ContentHash sha256(std::span<const std::uint8_t> bytes);
ContentHash sha256(std::string_view text);

/// Index entry for one distinct content.
struct ContentEntry {
    std::uint64_t stored_bytes = 0;
    std::uint32_t ref_count = 0;
    /// Empty for simulated blocks that carry only a digest and a size.
    std::vector<std::uint8_t> payload;
};

/// Prefix tree over 256-bit hashes branching on nibbles, with path compression:
/// each internal node records the nibble index it branches on, so a lookup
/// touches at most 64 nodes and typically log16(n).
class HashIndex {
public:
    ContentEntry* find(const ContentHash& key);
    const ContentEntry* find(const ContentHash& key) const;
    /// Inserts or returns the existing entry; second is true when inserted.
    std::pair<ContentEntry*, bool> insert(const ContentHash& key, ContentEntry entry);
    bool erase(const ContentHash& key);
    std::size_t size() const { return live_; }

    /// Keys in ascending byte order.
    std::vector<ContentHash> keys() const;

private:
    using Ref = std::int32_t;
    static constexpr Ref kEmpty = INT32_MIN;
    static bool is_leaf(Ref r) { return r < 0 && r != kEmpty; }
    static std::size_t leaf_index(Ref r) { return static_cast<std::size_t>(~r); }
    static Ref leaf_ref(std::size_t i) { return ~static_cast<Ref>(i); }
    static unsigned nibble(const ContentHash& key, unsigned i) {
        return (i & 1) ? (key[i >> 1] & 0x0F) : (key[i >> 1] >> 4);
    }

    struct Node {
        std::uint8_t depth = 0;
        Ref children[16];
    };
    struct Leaf {
        ContentHash key{};
        ContentEntry entry;
    };

    Ref new_leaf(const ContentHash& key, ContentEntry entry);
    Ref new_node(std::uint8_t depth);
    Ref& slot(std::int32_t node, unsigned nib) { return nodes_[node].children[nib]; }
    void collect(Ref r, std::vector<ContentHash>& out) const;

    Ref root_ = kEmpty;
    std::vector<Node> nodes_;
    std::vector<Leaf> leaves_;
    std::vector<std::int32_t> free_nodes_;
    std::vector<std::size_t> free_leaves_;
    std::size_t live_ = 0;
};

class UnknownHash : public std::out_of_range {
public:
    explicit UnknownHash(const ContentHash& h) : std::out_of_range("unknown content hash " + to_hex(h)) {}
};

struct PutResult {
    ContentHash hash{};
    bool was_duplicate = false;
};

struct LookupResult {
    std::uint64_t stored_bytes = 0;
    std::uint32_t ref_count = 0;
};

/// Content-addressable block store with reference counting. Lookups take a
/// shared lock; mutations are exclusive.
class ContentStore {
public:
    ContentStore() = default;
    ContentStore(const ContentStore&) = delete;
    ContentStore& operator=(const ContentStore&) = delete;

    /// Hashes the content; a duplicate bumps the refcount instead of storing again.
    PutResult put(BlockId block_id, std::span<const std::uint8_t> content);
    /// Same accounting for a simulated block known only by digest and logical size.
    PutResult put_digest(BlockId block_id, const ContentHash& hash, std::uint64_t size_bytes);

    /// Drops one reference; the entry disappears at zero. Returns the remaining count.
    std::uint32_t release(const ContentHash& hash);

    std::optional<LookupResult> lookup(const ContentHash& hash) const;
    bool contains(const ContentHash& hash) const { return lookup(hash).has_value(); }
    std::optional<std::vector<std::uint8_t>> payload(const ContentHash& hash) const;

    std::uint64_t total_raw_bytes() const;
    std::uint64_t total_stored_bytes() const;
    std::size_t entries() const;

private:
    PutResult put_entry(const ContentHash& hash, std::uint64_t size, std::vector<std::uint8_t> payload);

    mutable std::shared_mutex mutex_;
    HashIndex index_;
    std::uint64_t total_raw_bytes_ = 0;
    std::uint64_t total_stored_bytes_ = 0;
};

struct ManifestEntry {
    BlockId block_id = 0;
    ContentHash hash{};
    std::uint64_t size_bytes = 0;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct CheckpointManifest {
    std::vector<ManifestEntry> entries;
    /// Hashes whose payloads this checkpoint actually wrote, in first-seen order.
    std::vector<ContentHash> new_hashes;
    std::optional<ContentHash> base_ref;

    /// Little-endian, length-prefixed: "KVCM", u32 version, u8 has_base,
    /// [32B base], u64 n, n x (u64 id, 32B hash, u64 size), u64 m, m x 32B.
    std::vector<std::uint8_t> serialize() const;
    static CheckpointManifest deserialize(std::span<const std::uint8_t> bytes);
    /// Human-readable twin of the binary form.
    std::string to_json() const;
    /// SHA-256 of the binary form; used as base_ref by the next checkpoint.
    ContentHash id() const;

    friend bool operator==(const CheckpointManifest&, const CheckpointManifest&) = default;
};

struct CheckpointBlock {
    BlockId block_id = 0;
    /// Real content; when empty the block is simulated and `digest`/`size_bytes` apply.
    std::vector<std::uint8_t> content;
    ContentHash digest{};
    std::uint64_t size_bytes = 0;
};

struct CheckpointResult {
    CheckpointManifest manifest;
    std::uint64_t raw_bytes = 0;
    std::uint64_t payload_bytes_written = 0;
    std::uint64_t manifest_bytes = 0;
    /// 1 - (payload written + manifest) / raw. Negative when overhead dominates.
    double savings = 0.0;
};

/// Writes only contents the store does not already hold; the manifest
/// references every block by hash. Each listed block takes one store reference.
CheckpointResult checkpoint(ContentStore& store, std::span<const CheckpointBlock> blocks,
                            const CheckpointManifest* base = nullptr);

struct RestoredBlock {
    BlockId block_id = 0;
    ContentHash hash{};
    std::uint64_t size_bytes = 0;
    std::vector<std::uint8_t> content;
    friend bool operator==(const RestoredBlock&, const RestoredBlock&) = default;
};

/// Resolves every manifest entry against the store; throws UnknownHash otherwise.
std::vector<RestoredBlock> restore(const ContentStore& store, const CheckpointManifest& manifest);

/// Deterministic digest standing in for a simulated block's payload. Blocks with
/// equal (model, block type, content seed) collide by construction.
ContentHash simulated_content_digest(std::string_view model, BlockType type, std::uint64_t content_seed);

/// Per-model checkpoint accounting over a trace: each session's final set of
/// distinct blocks is checkpointed into one shared store, in session order.
struct DedupReport {
    std::string model;
    std::uint64_t sessions = 0;
    std::uint64_t tokens = 0;
    std::uint64_t raw_bytes = 0;
    /// Payload written plus manifest bytes.
    std::uint64_t deduped_bytes = 0;
    std::uint64_t distinct_contents = 0;
    double savings = 0.0;

    double raw_mb_per_1k_tokens() const;
    double deduped_mb_per_1k_tokens() const;
};

/// Block sizes are re-derived for the model from token spans (or from the
/// trace size when a block carries none), so one trace serves every model.
DedupReport dedup_trace(const std::vector<AccessEvent>& events, const ModelConfig& model);

}  // namespace kvtier
