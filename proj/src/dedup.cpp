// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/dedup.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <mutex>
#include <set>
#include <unordered_set>

#include "json.hpp"

namespace kvtier {

ContentHash sha256(std::span<const std::uint8_t> bytes) {
    ContentHash out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size())
        throw std::runtime_error("SHA-256 digest failed");
    return out;
}

ContentHash sha256(std::string_view text) {
    return sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// --- HashIndex ----------------------------------------------------------------

HashIndex::Ref HashIndex::new_leaf(const ContentHash& key, ContentEntry entry) {
    if (!free_leaves_.empty()) {
        std::size_t i = free_leaves_.back();
        free_leaves_.pop_back();
        leaves_[i] = Leaf{key, std::move(entry)};
        return leaf_ref(i);
    }
    leaves_.push_back(Leaf{key, std::move(entry)});
    return leaf_ref(leaves_.size() - 1);
}

HashIndex::Ref HashIndex::new_node(std::uint8_t depth) {
    Node n;
    n.depth = depth;
    std::fill(std::begin(n.children), std::end(n.children), kEmpty);
    if (!free_nodes_.empty()) {
        std::int32_t i = free_nodes_.back();
        free_nodes_.pop_back();
        nodes_[i] = n;
        return i;
    }
    nodes_.push_back(n);
    return static_cast<Ref>(nodes_.size() - 1);
}

const ContentEntry* HashIndex::find(const ContentHash& key) const {
    Ref r = root_;
    while (r != kEmpty && !is_leaf(r)) r = nodes_[r].children[nibble(key, nodes_[r].depth)];
    if (r == kEmpty) return nullptr;
    const Leaf& leaf = leaves_[leaf_index(r)];
    return leaf.key == key ? &leaf.entry : nullptr;
}

ContentEntry* HashIndex::find(const ContentHash& key) {
    return const_cast<ContentEntry*>(std::as_const(*this).find(key));
}

std::pair<ContentEntry*, bool> HashIndex::insert(const ContentHash& key, ContentEntry entry) {
    if (root_ == kEmpty) {
        root_ = new_leaf(key, std::move(entry));
        live_++;
        return {&leaves_[leaf_index(root_)].entry, true};
    }
    // Reach any leaf sharing the longest prefix the tree can vouch for.
    Ref r = root_;
    while (!is_leaf(r)) {
        const Node& n = nodes_[r];
        Ref next = n.children[nibble(key, n.depth)];
        if (next == kEmpty) {
            for (Ref c : n.children) {
                if (c != kEmpty) {
                    next = c;
                    break;
                }
            }
        }
        r = next;
    }
    const ContentHash other = leaves_[leaf_index(r)].key;
    unsigned diff = 0;
    while (diff < 64 && nibble(key, diff) == nibble(other, diff)) ++diff;
    if (diff == 64) return {&leaves_[leaf_index(r)].entry, false};

    // Re-descend to the insertion point: the first reference whose branch depth
    // is >= diff (or a leaf).
    std::int32_t parent = -1;
    unsigned parent_nib = 0;
    r = root_;
    while (!is_leaf(r) && nodes_[r].depth < diff) {
        parent = r;
        parent_nib = nibble(key, nodes_[r].depth);
        r = nodes_[r].children[parent_nib];
    }
    Ref leaf = new_leaf(key, std::move(entry));
    if (!is_leaf(r) && nodes_[r].depth == diff) {
        slot(r, nibble(key, diff)) = leaf;
    } else {
        Ref branch = new_node(static_cast<std::uint8_t>(diff));
        slot(branch, nibble(key, diff)) = leaf;
        slot(branch, nibble(other, diff)) = r;
        if (parent < 0)
            root_ = branch;
        else
            slot(parent, parent_nib) = branch;
    }
    live_++;
    return {&leaves_[leaf_index(leaf)].entry, true};
}

bool HashIndex::erase(const ContentHash& key) {
    std::int32_t parent = -1, grand = -1;
    unsigned parent_nib = 0, grand_nib = 0;
    Ref r = root_;
    while (r != kEmpty && !is_leaf(r)) {
        grand = parent;
        grand_nib = parent_nib;
        parent = r;
        parent_nib = nibble(key, nodes_[r].depth);
        r = nodes_[r].children[parent_nib];
    }
    if (r == kEmpty || leaves_[leaf_index(r)].key != key) return false;

    leaves_[leaf_index(r)].entry = {};
    free_leaves_.push_back(leaf_index(r));
    live_--;
    if (parent < 0) {
        root_ = kEmpty;
        return true;
    }
    slot(parent, parent_nib) = kEmpty;
    int remaining = 0;
    Ref survivor = kEmpty;
    for (Ref c : nodes_[parent].children) {
        if (c != kEmpty) {
            remaining++;
            survivor = c;
        }
    }
    if (remaining == 1) {
        if (grand < 0)
            root_ = survivor;
        else
            slot(grand, grand_nib) = survivor;
        free_nodes_.push_back(parent);
    }
    return true;
}

void HashIndex::collect(Ref r, std::vector<ContentHash>& out) const {
    if (r == kEmpty) return;
    if (is_leaf(r)) {
        out.push_back(leaves_[leaf_index(r)].key);
        return;
    }
    for (Ref c : nodes_[r].children) collect(c, out);
}

std::vector<ContentHash> HashIndex::keys() const {
    std::vector<ContentHash> out;
    out.reserve(live_);
    collect(root_, out);
    return out;
}

// --- ContentStore -------------------------------------------------------------

PutResult ContentStore::put_entry(const ContentHash& hash, std::uint64_t size,
                                  std::vector<std::uint8_t> payload) {
    std::unique_lock lock(mutex_);
    total_raw_bytes_ += size;
    if (ContentEntry* existing = index_.find(hash)) {
        existing->ref_count++;
        return {hash, true};
    }
    index_.insert(hash, ContentEntry{size, 1, std::move(payload)});
    total_stored_bytes_ += size;
    return {hash, false};
}

PutResult ContentStore::put(BlockId, std::span<const std::uint8_t> content) {
    if (content.empty()) throw std::invalid_argument("cannot store empty content");
    return put_entry(sha256(content), content.size(),
                     std::vector<std::uint8_t>(content.begin(), content.end()));
}

PutResult ContentStore::put_digest(BlockId, const ContentHash& hash, std::uint64_t size_bytes) {
    if (size_bytes == 0) throw std::invalid_argument("cannot store empty content");
    return put_entry(hash, size_bytes, {});
}

std::uint32_t ContentStore::release(const ContentHash& hash) {
    std::unique_lock lock(mutex_);
    ContentEntry* e = index_.find(hash);
    if (!e) throw UnknownHash(hash);
    if (--e->ref_count > 0) return e->ref_count;
    total_stored_bytes_ -= e->stored_bytes;
    index_.erase(hash);
    return 0;
}

std::optional<LookupResult> ContentStore::lookup(const ContentHash& hash) const {
    std::shared_lock lock(mutex_);
    const ContentEntry* e = index_.find(hash);
    if (!e) return std::nullopt;
    return LookupResult{e->stored_bytes, e->ref_count};
}

std::optional<std::vector<std::uint8_t>> ContentStore::payload(const ContentHash& hash) const {
    std::shared_lock lock(mutex_);
    const ContentEntry* e = index_.find(hash);
    if (!e) return std::nullopt;
    return e->payload;
}

std::uint64_t ContentStore::total_raw_bytes() const {
    std::shared_lock lock(mutex_);
    return total_raw_bytes_;
}

std::uint64_t ContentStore::total_stored_bytes() const {
    std::shared_lock lock(mutex_);
    return total_stored_bytes_;
}

std::size_t ContentStore::entries() const {
    std::shared_lock lock(mutex_);
    return index_.size();
}

// --- Manifests ----------------------------------------------------------------

namespace {

constexpr std::uint32_t kManifestVersion = 1;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_hash(std::vector<std::uint8_t>& out, const ContentHash& h) {
    out.insert(out.end(), h.begin(), h.end());
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw std::invalid_argument("truncated checkpoint manifest");
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    ContentHash hash() {
        need(32);
        ContentHash h{};
        std::memcpy(h.data(), bytes_.data() + pos_, 32);
        pos_ += 32;
        return h;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> CheckpointManifest::serialize() const {
    std::vector<std::uint8_t> out{'K', 'V', 'C', 'M'};
    put_u32(out, kManifestVersion);
    out.push_back(base_ref ? 1 : 0);
    if (base_ref) put_hash(out, *base_ref);
    put_u64(out, entries.size());
    for (const auto& e : entries) {
        put_u64(out, e.block_id);
        put_hash(out, e.hash);
        put_u64(out, e.size_bytes);
    }
    put_u64(out, new_hashes.size());
    for (const auto& h : new_hashes) put_hash(out, h);
    return out;
}

CheckpointManifest CheckpointManifest::deserialize(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    in.need(4);
    if (!(bytes[0] == 'K' && bytes[1] == 'V' && bytes[2] == 'C' && bytes[3] == 'M'))
        throw std::invalid_argument("not a checkpoint manifest");
    for (int i = 0; i < 4; ++i) in.u8();
    const auto version = in.u32();
    if (version != kManifestVersion)
        throw std::invalid_argument("unsupported manifest version " + std::to_string(version));
    CheckpointManifest m;
    if (in.u8()) m.base_ref = in.hash();
    const auto n = in.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        ManifestEntry e;
        e.block_id = in.u64();
        e.hash = in.hash();
        e.size_bytes = in.u64();
        m.entries.push_back(e);
    }
    const auto k = in.u64();
    for (std::uint64_t i = 0; i < k; ++i) m.new_hashes.push_back(in.hash());
    if (!in.done()) throw std::invalid_argument("trailing bytes after checkpoint manifest");
    return m;
}

std::string CheckpointManifest::to_json() const {
    nlohmann::ordered_json doc;
    doc["version"] = kManifestVersion;
    doc["base_ref"] = base_ref ? nlohmann::ordered_json(to_hex(*base_ref)) : nlohmann::ordered_json();
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : entries)
        arr.push_back({{"block_id", e.block_id}, {"hash", to_hex(e.hash)}, {"size_bytes", e.size_bytes}});
    doc["entries"] = std::move(arr);
    auto fresh = nlohmann::ordered_json::array();
    for (const auto& h : new_hashes) fresh.push_back(to_hex(h));
    doc["new_hashes"] = std::move(fresh);
    return doc.dump(2) + "\n";
}

ContentHash CheckpointManifest::id() const { return sha256(serialize()); }

CheckpointResult checkpoint(ContentStore& store, std::span<const CheckpointBlock> blocks,
                            const CheckpointManifest* base) {
    CheckpointResult result;
    if (base) result.manifest.base_ref = base->id();
    for (const auto& b : blocks) {
        PutResult put;
        std::uint64_t size = 0;
        if (!b.content.empty()) {
            size = b.content.size();
            put = store.put(b.block_id, b.content);
        } else {
            size = b.size_bytes;
            put = store.put_digest(b.block_id, b.digest, b.size_bytes);
        }
        result.raw_bytes += size;
        if (!put.was_duplicate) {
            result.payload_bytes_written += size;
            result.manifest.new_hashes.push_back(put.hash);
        }
        result.manifest.entries.push_back({b.block_id, put.hash, size});
    }
    result.manifest_bytes = result.manifest.serialize().size();
    if (result.raw_bytes > 0) {
        result.savings = 1.0 - static_cast<double>(result.payload_bytes_written + result.manifest_bytes) /
                                   static_cast<double>(result.raw_bytes);
    }
    return result;
}

std::vector<RestoredBlock> restore(const ContentStore& store, const CheckpointManifest& manifest) {
    std::vector<RestoredBlock> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        auto payload = store.payload(e.hash);
        if (!payload) throw UnknownHash(e.hash);
        out.push_back({e.block_id, e.hash, e.size_bytes, std::move(*payload)});
    }
    return out;
}

ContentHash simulated_content_digest(std::string_view model, BlockType type, std::uint64_t content_seed) {
    std::string descriptor = "kvtier-sim-block/v1|";
    descriptor += model;
    descriptor += '|';
    descriptor += to_string(type);
    descriptor += '|';
    descriptor += std::to_string(content_seed);
    return sha256(descriptor);
}

double DedupReport::raw_mb_per_1k_tokens() const {
    return tokens ? static_cast<double>(raw_bytes) / 1e6 * 1000.0 / static_cast<double>(tokens) : 0.0;
}

double DedupReport::deduped_mb_per_1k_tokens() const {
    return tokens ? static_cast<double>(deduped_bytes) / 1e6 * 1000.0 / static_cast<double>(tokens) : 0.0;
}

DedupReport dedup_trace(const std::vector<AccessEvent>& events, const ModelConfig& model) {
    validate(model);
    const std::uint64_t per_token = sequence_kv_bytes(model, 1);
    struct Session {
        std::vector<CheckpointBlock> blocks;
        std::set<BlockId> seen;
        std::uint64_t tokens = 0;
    };
    std::map<std::string, Session> open;
    std::vector<std::string> order;
    ContentStore store;
    DedupReport report;
    report.model = model.name;

    for (const auto& e : events) {
        if (e.kind != EventKind::block_access) continue;
        auto [it, fresh] = open.try_emplace(e.session_id);
        if (fresh) order.push_back(e.session_id);
        Session& s = it->second;
        if (!s.seen.insert(e.block_id).second) continue;
        std::uint64_t tokens = e.token_span ? e.token_span->length() : 0;
        std::uint64_t size = tokens ? sequence_kv_bytes(model, tokens) : e.size_bytes;
        if (!tokens) tokens = (e.size_bytes + per_token - 1) / per_token;
        CheckpointBlock b;
        b.block_id = e.block_id;
        b.digest = simulated_content_digest(model.name, e.block_type, e.content_seed.value_or(e.block_id));
        b.size_bytes = size;
        s.blocks.push_back(std::move(b));
        s.tokens += tokens;
    }
    for (const auto& sid : order) {
        const Session& s = open.at(sid);
        const auto r = checkpoint(store, s.blocks);
        report.raw_bytes += r.raw_bytes;
        report.deduped_bytes += r.payload_bytes_written + r.manifest_bytes;
        report.tokens += s.tokens;
        report.sessions++;
    }

    report.distinct_contents = store.entries();
    if (report.raw_bytes)
        report.savings = 1.0 - static_cast<double>(report.deduped_bytes) / static_cast<double>(report.raw_bytes);
    return report;
}

}  // namespace kvtier
