// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/replay.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace kvtier {

std::string_view to_string(PolicyKind p) {
    switch (p) {
        case PolicyKind::LRU: return "lru";
        case PolicyKind::EMA: return "ema";
        case PolicyKind::Bayesian: return "bayesian";
    }
    return "?";
}

PolicyKind parse_policy(std::string_view s) {
    if (s == "lru" || s == "LRU") return PolicyKind::LRU;
    if (s == "ema" || s == "EMA") return PolicyKind::EMA;
    if (s == "bayesian" || s == "Bayesian") return PolicyKind::Bayesian;
    throw ParseEnumError("unknown policy '" + std::string(s) + "'");
}

void validate(const ReplayConfig& c) {
    if (c.tiers.size() != static_cast<std::size_t>(kNumTiers))
        throw std::invalid_argument("replay needs exactly " + std::to_string(kNumTiers) + " tiers");
    for (const auto& t : c.tiers) validate(t);
    if (!(c.capacity_scale > 0.0)) throw std::invalid_argument("capacity_scale must be positive");
    validate(c.model);
    validate(c.predictor);
    validate(c.eviction);
    validate(c.value);
    validate(c.prefetch);
    classify_session(0.0, c.session_thresholds);
    if (!(c.agentic_smoothing >= 0.0)) throw std::invalid_argument("agentic smoothing must be non-negative");
    if (!(c.agentic_memory_decay >= 0.0 && c.agentic_memory_decay < 1.0))
        throw std::invalid_argument("agentic memory decay must lie in [0, 1)");
}

std::vector<TierSpec> scaled_tiers(const ReplayConfig& config) {
    std::vector<TierSpec> out = config.tiers;
    for (auto& t : out) {
        if (t.unbounded()) continue;
        const double scaled = std::floor(static_cast<double>(t.capacity_bytes) * config.capacity_scale);
        t.capacity_bytes = static_cast<std::uint64_t>(std::max(1.0, scaled));
    }
    return out;
}

double ReplayMetrics::hit_rate_t01() const {
    if (accesses == 0) return 0.0;
    return static_cast<double>(hits[0] + hits[1]) / static_cast<double>(accesses);
}

namespace {

using GroupKey = std::tuple<std::size_t, std::uint32_t, std::uint32_t>;
using Bucket = std::set<std::pair<std::uint64_t, BlockId>>;

struct BlockInfo {
    std::uint64_t size = 0;
    std::uint64_t tokens = 1;
    BlockType type = BlockType::user_context;
    TransitionType transition = TransitionType::reasoning_step;
    TokenSpan span;
    LayerSet layers;
    std::string session;
    std::uint64_t recency = 0;
    /// Tier whose victim index holds the block; -1 when not resident.
    int tier = -1;
    GroupKey group{};
    std::uint64_t indexed_recency = 0;

    CellKey cell() const { return {type, transition}; }
};

struct Flight {
    int from = 0;
    int to = 0;
    SimTime completion{0};
};

class Engine {
public:
    Engine(const ReplayConfig& config, PolicyKind policy, std::uint64_t seed)
        : config_(config),
          policy_(policy),
          tiers_(scaled_tiers(config)),
          predictor_(config.predictor),
          matrix_(ImportanceMatrix::for_model(config.model)),
          agentic_(config.agentic_smoothing, config.agentic_memory_decay, config.session_thresholds) {
        metrics_.policy = policy;
        metrics_.seed = seed;
        tiers_.track_changes(config.debug_invariants);
        eviction_ = config.eviction;
        if (policy == PolicyKind::EMA) eviction_.position_decay_tau = std::numeric_limits<double>::infinity();
        const Rational bpt = bytes_per_token_layer(config.model) * Rational(config.model.num_layers);
        model_bytes_per_token_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(bpt.floor()));
    }

    void run(const std::vector<AccessEvent>& trace) {
        for (const auto& e : trace) {
            ++event_index_;
            hierarchy_advance(e.time);
            switch (e.kind) {
                case EventKind::block_access: on_access(e); break;
                case EventKind::tool_call: on_tool_call(e); break;
                case EventKind::request_end: close_tool(e.session_id); break;
                case EventKind::request_start: break;
            }
            if (config_.debug_invariants) check();
        }
        if (config_.debug_invariants) tiers_.check_invariants();
        finish();
    }

    ReplayMetrics metrics() const { return metrics_; }
    const PredictorState& predictor() const { return predictor_; }
    std::string agentic_json() const { return agentic_.dump_json(); }

private:
    bool bayesian() const { return policy_ == PolicyKind::Bayesian; }

    void hierarchy_advance(SimTime now) {
        tiers_.advance(now);
        for (auto it = flights_.begin(); it != flights_.end();) {
            if (it->second.completion <= now)
                it = flights_.erase(it);
            else
                ++it;
        }
    }

    // --- victim index -----------------------------------------------------------

    void index_insert(BlockId id, int tier) {
        auto& info = info_.at(id);
        info.tier = tier;
        info.group = {info.cell().index(), info.layers.first, info.layers.count};
        info.indexed_recency = info.recency;
        index_[tier][info.group].emplace(info.recency, id);
    }

    void index_erase(BlockId id) {
        auto& info = info_.at(id);
        if (info.tier < 0) return;
        auto& groups = index_[info.tier];
        auto g = groups.find(info.group);
        g->second.erase({info.indexed_recency, id});
        if (g->second.empty()) groups.erase(g);
        info.tier = -1;
    }

    /// Re-keys the block after its recency or cell changed.
    void reindex(BlockId id) {
        const int tier = info_.at(id).tier;
        if (tier < 0) return;
        index_erase(id);
        index_insert(id, tier);
    }

    double layer_score(const LayerSet& layers) {
        if (score_epoch_ != event_index_) {
            score_cache_.clear();
            score_epoch_ = event_index_;
        }
        const auto key = std::make_pair(layers.first, layers.count);
        auto it = score_cache_.find(key);
        if (it != score_cache_.end()) return it->second;
        const double s = matrix_.block_score(layers);
        score_cache_.emplace(key, s);
        return s;
    }

    std::optional<BlockId> pick_victim(int tier, BlockId protect) {
        using Key = std::tuple<double, double, std::uint64_t, BlockId>;
        std::optional<Key> best;
        for (const auto& [group, bucket] : index_[tier]) {
            const BlockId* candidate = nullptr;
            std::uint64_t recency = 0;
            for (const auto& [rec, id] : bucket) {
                if (id == protect || flights_.count(id)) continue;
                candidate = &id;
                recency = rec;
                break;
            }
            if (!candidate) continue;
            double worth = 0.0, score = 0.0;
            if (policy_ != PolicyKind::LRU) {
                const auto& info = info_.at(*candidate);
                score = layer_score(info.layers);
                if (bayesian()) {
                    // Reuse probability per event of idle time: stale blocks age out
                    // even in high-probability cells.
                    const double p = predictor_.predict(CellKey::from_index(std::get<0>(group)));
                    worth = p / static_cast<double>(event_index_ - recency + 1);
                }
            }
            Key key{worth, score, recency, *candidate};
            if (!best || key < *best) best = key;
        }
        if (!best) return std::nullopt;
        return std::get<3>(*best);
    }

    /// Frees `need` bytes in `tier` by demoting victims down the hierarchy;
    /// victims with nowhere to go are dropped.
    bool make_room(int tier, std::uint64_t need, BlockId protect, SimTime now) {
        if (!tiers_.enabled(tier)) return false;
        const auto& spec = tiers_.spec(tier);
        if (spec.unbounded()) return true;
        if (need > spec.capacity_bytes) return false;
        while (tiers_.free_bytes(tier) < need) {
            auto victim = pick_victim(tier, protect);
            if (!victim) return false;
            const std::uint64_t vsize = info_.at(*victim).size;
            auto dest = tiers_.next_slower_enabled(tier);
            index_erase(*victim);
            if (dest && make_room(*dest, vsize, protect, now) &&
                tiers_.demote(*victim, tier, *dest, now).ok()) {
                index_insert(*victim, *dest);
            } else {
                tiers_.evict(tier, *victim);
                metrics_.drops++;
            }
        }
        return true;
    }

    BlockMeta meta_of(BlockId id) const {
        const auto& info = info_.at(id);
        BlockMeta m;
        m.block_id = id;
        m.session_id = info.session;
        m.block_type = info.type;
        m.token_span = info.span;
        m.layer_set = info.layers;
        m.size_bytes = info.size;
        m.last_transition = info.transition;
        return m;
    }

    bool promote(BlockId id, int from, int to, SimTime now) {
        if (to >= from) return false;
        if (!make_room(to, info_.at(id).size, id, now)) return false;
        auto r = tiers_.promote(id, from, to, now);
        if (!r.ok()) return false;
        flights_[id] = {from, to, r.completion};
        index_erase(id);
        index_insert(id, to);
        return true;
    }

    void place_new(BlockId id, int target, SimTime now) {
        const BlockMeta meta = meta_of(id);
        for (int t = target; t < kNumTiers; ++t) {
            if (!tiers_.enabled(t)) continue;
            if (!make_room(t, meta.size_bytes, id, now)) continue;
            if (tiers_.write_block(t, meta, now).ok()) {
                index_insert(id, t);
                return;
            }
        }
        metrics_.drops++;
    }

    /// LRU and EMA always aim for the fastest tier. Bayesian uses value-score
    /// placement, then takes any faster tier that has room without evicting.
    int target_tier(BlockId id, double p) const {
        if (!bayesian()) return tiers_.fastest_enabled();
        const int entitled = tiers_.place(meta_of(id), p, config_.value);
        const std::uint64_t size = info_.at(id).size;
        for (int t = 0; t < entitled; ++t) {
            if (tiers_.enabled(t) && tiers_.free_bytes(t) >= size) return t;
        }
        return entitled;
    }

    // --- events -----------------------------------------------------------------

    void on_access(const AccessEvent& e) {
        metrics_.accesses++;
        const BlockId id = e.block_id;
        auto [it, inserted] = info_.try_emplace(id);
        BlockInfo& info = it->second;
        const bool reused = !inserted;
        if (inserted) {
            info.size = e.size_bytes;
            info.type = e.block_type;
            info.span = e.token_span ? *e.token_span
                                     : TokenSpan{e.position, e.position + std::max<std::uint64_t>(1, e.size_bytes / model_bytes_per_token_)};
            info.tokens = info.span.length();
            info.layers = LayerSet::all(config_.model.num_layers);
            info.session = e.session_id;
        }
        info.transition = e.transition_type;
        info.recency = event_index_;
        reindex(id);

        if (policy_ != PolicyKind::LRU) {
            const double distance = std::fabs(static_cast<double>(e.position) - info.span.midpoint());
            matrix_.record_block_access(info.layers, distance, eviction_);
        }
        const double p = bayesian() ? predictor_.predict(info.cell()) : 0.0;
        const double recompute_ns = static_cast<double>(info.tokens) * config_.value.recompute_cost_per_token_ns;

        int hit_tier = -1;
        if (auto f = flights_.find(id); f != flights_.end()) {
            if (tiers_.read_block(f->second.from, id, e.time)) hit_tier = f->second.from;
        } else if (auto loc = tiers_.locate(id)) {
            if (tiers_.read_block(*loc, id, e.time)) hit_tier = *loc;
        }

        if (hit_tier >= 0) {
            metrics_.hits[hit_tier]++;
            const double transfer = hit_tier == 0 ? 0.0 : transfer_ns(tiers_.spec(hit_tier), info.size);
            metrics_.recompute_ns_saved += recompute_ns - transfer;
            if (!flights_.count(id)) {
                const int target = target_tier(id, p);
                if (target < hit_tier) promote(id, hit_tier, target, e.time);
            }
        } else {
            metrics_.misses++;
            metrics_.recompute_ns_charged += recompute_ns;
            place_new(id, target_tier(id, p), e.time);
        }

        if (bayesian()) predictor_.observe(info.type, info.transition, reused);

        auto& sess = sessions_[e.session_id];
        if (sess.blocks_seen.insert(id).second) {
            sess.blocks.push_back(id);
            sess.unique_bytes += info.size;
        }
        if (e.block_type == BlockType::tool_context &&
            (e.transition_type == TransitionType::tool_switch ||
             e.transition_type == TransitionType::same_tool_repeat) &&
            sess.tool) {
            sess.tool_bytes += info.size;
            tool_blocks_[*sess.tool][id]++;
        }
        if (config_.prefetch.enabled) prefetch(e, sess);
    }

    struct Session {
        std::vector<BlockId> blocks;
        std::unordered_set<BlockId> blocks_seen;
        std::uint64_t unique_bytes = 0;
        std::optional<std::string> tool;
        std::uint64_t tool_bytes = 0;
    };

    void prefetch(const AccessEvent& e, const Session& sess) {
        std::vector<BlockMeta> candidates;
        for (BlockId id : sess.blocks) {
            if (flights_.count(id)) continue;
            auto loc = tiers_.locate(id);
            if (!loc || *loc == 0) continue;
            BlockMeta m = meta_of(id);
            m.resident_tier = loc;
            candidates.push_back(std::move(m));
        }
        if (candidates.empty()) return;
        const std::uint32_t layers = config_.model.num_layers;
        const std::uint32_t block_tokens = block_tokens_for_arch(infer_architecture(config_.model));
        // Whole-stack blocks take the widest window among the layers they cover.
        for (BlockId id : plan_prefetch(e.position, layers - 1, layers, block_tokens, candidates, config_.prefetch)) {
            auto loc = tiers_.locate(id);
            if (!loc || *loc == 0) continue;
            info_.at(id).recency = event_index_;
            reindex(id);
            if (promote(id, *loc, 0, e.time)) metrics_.prefetches++;
        }
    }

    void close_tool(const std::string& sid) {
        auto it = sessions_.find(sid);
        if (it == sessions_.end() || !it->second.tool) return;
        if (bayesian() && config_.agentic)
            agentic_.observe_tool_memory(*it->second.tool, static_cast<double>(it->second.tool_bytes));
        it->second.tool.reset();
        it->second.tool_bytes = 0;
    }

    void on_tool_call(const AccessEvent& e) {
        metrics_.tool_calls++;
        close_tool(e.session_id);
        auto& sess = sessions_[e.session_id];
        sess.tool = e.tool_name;
        if (!bayesian() || !config_.agentic) return;
        const PreparationPlan plan = agentic_.observe_tool_call(e);
        metrics_.reserved_bytes += plan.reserve_bytes;
        matrix_.apply_transition_multipliers(plan.transition_type, config_.multipliers);
        auto blocks = tool_blocks_.find(plan.prefetch_tool);
        if (blocks == tool_blocks_.end()) return;
        const double p = predictor_.predict(BlockType::tool_context, plan.transition_type);
        for (const auto& [id, uses] : blocks->second) {
            if (uses < 2 || flights_.count(id)) continue;
            auto loc = tiers_.locate(id);
            if (!loc) continue;
            const int target = tiers_.place(meta_of(id), p, config_.value);
            if (target < *loc && promote(id, *loc, target, e.time)) metrics_.prefetches++;
        }
    }

    void check() {
        tiers_.check_recent_invariants();
        std::array<std::size_t, kNumTiers> indexed{};
        for (int t = 0; t < kNumTiers; ++t)
            for (const auto& [g, bucket] : index_[t]) indexed[t] += bucket.size();
        std::array<std::size_t, kNumTiers> sources{};
        for (const auto& [id, f] : flights_) {
            if (!tiers_.contains(f.from, id) || !tiers_.contains(f.to, id))
                throw std::logic_error("in-flight block " + std::to_string(id) + " missing a copy");
            sources[f.from]++;
        }
        for (int t = 0; t < kNumTiers; ++t) {
            if (indexed[t] + sources[t] != tiers_.resident_count(t))
                throw std::logic_error("victim index out of sync with tier " + std::to_string(t));
        }
        metrics_.invariant_checks++;
    }

    void finish() {
        const auto stats = tiers_.stats();
        for (int t = 0; t < kNumTiers; ++t) {
            metrics_.promotions[t] = stats[t].promotion_count;
            metrics_.demotions[t] = stats[t].demotion_count;
            metrics_.used_bytes[t] = stats[t].used_bytes;
        }
        for (auto& [sid, sess] : sessions_) {
            const auto c = classify_session(static_cast<double>(sess.unique_bytes), config_.session_thresholds);
            metrics_.session_classes[static_cast<std::size_t>(c)]++;
        }
    }

    const ReplayConfig& config_;
    PolicyKind policy_;
    EvictionParams eviction_;
    TierHierarchy tiers_;
    PredictorState predictor_;
    ImportanceMatrix matrix_;
    AgenticPredictor agentic_;
    std::uint64_t model_bytes_per_token_ = 1;

    std::unordered_map<BlockId, BlockInfo> info_;
    std::array<std::map<GroupKey, Bucket>, kNumTiers> index_;
    std::map<BlockId, Flight> flights_;
    std::map<std::string, Session> sessions_;
    std::map<std::string, std::map<BlockId, std::uint32_t>> tool_blocks_;

    std::uint64_t event_index_ = 0;
    std::uint64_t score_epoch_ = std::numeric_limits<std::uint64_t>::max();
    std::map<std::pair<std::uint32_t, std::uint32_t>, double> score_cache_;
    ReplayMetrics metrics_;
};

}  // namespace

ReplayArtifacts replay_with_state(const std::vector<AccessEvent>& trace, PolicyKind policy,
                                  const ReplayConfig& config, std::uint64_t seed) {
    validate(config);
    validate_stream(trace);
    const auto start = std::chrono::steady_clock::now();
    Engine engine(config, policy, seed);
    engine.run(trace);
    ReplayArtifacts out{engine.metrics(), engine.predictor(), engine.agentic_json()};
    out.metrics.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

ReplayMetrics replay(const std::vector<AccessEvent>& trace, PolicyKind policy, const ReplayConfig& config,
                     std::uint64_t seed) {
    return replay_with_state(trace, policy, config, seed).metrics;
}

PolicySummary summarize(std::vector<ReplayMetrics> runs) {
    PolicySummary s;
    s.runs = std::move(runs);
    const double n = static_cast<double>(s.runs.size());
    if (s.runs.empty()) return s;
    for (const auto& r : s.runs) s.mean_hit_rate += r.hit_rate_t01();
    s.mean_hit_rate /= n;
    if (s.runs.size() > 1) {
        double ss = 0.0;
        for (const auto& r : s.runs) ss += (r.hit_rate_t01() - s.mean_hit_rate) * (r.hit_rate_t01() - s.mean_hit_rate);
        s.stdev_hit_rate = std::sqrt(ss / (n - 1.0));
    }
    return s;
}

PolicyComparison compare_policies(const std::vector<AccessEvent>& trace, const ReplayConfig& config,
                                  const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw std::invalid_argument("compare_policies needs at least two seeds");
    PolicyComparison out;
    for (auto policy : kAllPolicies) {
        std::vector<ReplayMetrics> runs;
        for (auto seed : seeds) runs.push_back(replay(trace, policy, config, seed));
        out[policy] = summarize(std::move(runs));
    }
    return out;
}

PolicyComparison compare_policies(const WorkloadSpec& workload, const ReplayConfig& config,
                                  const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw std::invalid_argument("compare_policies needs at least two seeds");
    std::map<PolicyKind, std::vector<ReplayMetrics>> runs;
    for (auto seed : seeds) {
        WorkloadSpec spec = workload;
        spec.seed = seed;
        const auto trace = generate(spec);
        for (auto policy : kAllPolicies) runs[policy].push_back(replay(trace, policy, config, seed));
    }
    PolicyComparison out;
    for (auto& [policy, r] : runs) out[policy] = summarize(std::move(r));
    return out;
}

}  // namespace kvtier
