// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

extern char** environ;

namespace kvtier {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::vector<std::string> kSections = {"run",      "sizing",   "hierarchy", "replay",     "predictor", "eviction",
                                            "prefetch", "value",    "workload",  "projection", "output"};

std::vector<SystemRow> published_systems() {
    return {
        {"vLLM 0.19", 1.2, 4.2, 0.048, 1450, 0.82},
        {"SGLang 0.5.9", 0.9, 3.1, 0.042, 1850, 0.68},
        {"TensorRT-LLM", 0.8, 2.8, 0.035, 2100, 0.61},
        {"FlexGen", 3.2, 12.1, 0.180, 650, 1.85},
    };
}

/// One JSON object whose keys must all be consumed.
class Section {
public:
    Section(const json& j, std::string where, const std::set<std::string>* from_env = nullptr,
            std::string env_section = {})
        : j_(j), where_(std::move(where)), from_env_(from_env), env_section_(std::move(env_section)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) {
        used_.insert(key);
        return j_.at(key);
    }
    std::string at(const char* key) const { return where_ + "." + key + env_note(key); }

    void get(const char* key, double& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(at(key) + ": expected a number");
        out = v.get<double>();
    }
    void get(const char* key, std::uint64_t& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            throw ConfigError(at(key) + ": expected a non-negative integer");
        out = v.get<std::uint64_t>();
    }
    void get(const char* key, std::uint32_t& out) {
        std::uint64_t v = out;
        get(key, v);
        if (v > std::numeric_limits<std::uint32_t>::max()) throw ConfigError(at(key) + ": value too large");
        out = static_cast<std::uint32_t>(v);
    }
    void get(const char* key, bool& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(at(key) + ": expected true or false");
        out = v.get<bool>();
    }
    void get(const char* key, std::string& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(at(key) + ": expected a string");
        out = v.get<std::string>();
    }
    template <std::size_t N>
    void get(const char* key, std::array<double, N>& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_array() || v.size() != N)
            throw ConfigError(at(key) + ": expected an array of " + std::to_string(N) + " numbers");
        for (std::size_t i = 0; i < N; ++i) {
            if (!v[i].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected a number");
            out[i] = v[i].get<double>();
        }
    }

    void done() const {
        for (const auto& [k, v] : j_.items()) {
            if (!used_.count(k)) throw ConfigError(where_ + "." + k + env_note(k.c_str()) + ": unknown key");
        }
    }

private:
    std::string env_note(const char* key) const {
        if (!from_env_ || !from_env_->count(key)) return "";
        std::string var = "KVTIER_";
        for (char c : env_section_ + "_" + key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return " (from " + var + ")";
    }

    const json& j_;
    std::string where_;
    const std::set<std::string>* from_env_;
    std::string env_section_;
    std::set<std::string> used_;
};

template <typename F>
void each(const json& arr, const std::string& where, F&& f) {
    if (!arr.is_array()) throw ConfigError(where + ": expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) f(arr[i], where + "[" + std::to_string(i) + "]");
}

ModelConfig read_model(const json& j, const std::string& where) {
    Section s(j, where);
    ModelConfig m;
    s.get("name", m.name);
    s.get("num_layers", m.num_layers);
    s.get("query_heads", m.query_heads);
    s.get("kv_heads", m.kv_heads);
    s.get("head_dim", m.head_dim);
    for (const char* key : {"latent_dim", "rope_dim"}) {
        if (!s.has(key)) continue;
        const json& v = s.raw(key);
        if (v.is_null()) continue;
        if (!v.is_number_unsigned()) throw ConfigError(s.at(key) + ": expected a non-negative integer or null");
        (std::string(key) == "latent_dim" ? m.latent_dim : m.rope_dim) = v.get<std::uint32_t>();
    }
    if (s.has("precision_bytes")) {
        const json& v = s.raw("precision_bytes");
        if (!v.is_number()) throw ConfigError(s.at("precision_bytes") + ": expected a number");
        try {
            m.precision_bytes = Rational::from_double(v.get<double>());
        } catch (const std::exception& e) {
            throw ConfigError(s.at("precision_bytes") + ": " + e.what());
        }
    }
    s.get("tp_degree", m.tp_degree);
    if (s.has("kv_shard_under_tp")) {
        const json& v = s.raw("kv_shard_under_tp");
        if (!v.is_null()) {
            if (!v.is_boolean()) throw ConfigError(s.at("kv_shard_under_tp") + ": expected true, false or null");
            m.kv_shard_under_tp = v.get<bool>();
        }
    }
    s.done();
    if (m.name.empty()) throw ConfigError(where + ".name: required");
    try {
        validate(m);
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return m;
}

ordered_json model_json(const ModelConfig& m) {
    ordered_json j;
    j["name"] = m.name;
    j["num_layers"] = m.num_layers;
    j["query_heads"] = m.query_heads;
    j["kv_heads"] = m.kv_heads;
    j["head_dim"] = m.head_dim;
    j["latent_dim"] = m.latent_dim ? ordered_json(*m.latent_dim) : ordered_json(nullptr);
    j["rope_dim"] = m.rope_dim ? ordered_json(*m.rope_dim) : ordered_json(nullptr);
    j["precision_bytes"] = m.precision_bytes.to_double();
    j["tp_degree"] = m.tp_degree;
    j["kv_shard_under_tp"] = m.kv_shard_under_tp ? ordered_json(*m.kv_shard_under_tp) : ordered_json(nullptr);
    return j;
}

TierSpec read_tier(const json& j, const std::string& where, int index) {
    Section s(j, where);
    TierSpec t;
    t.tier_index = index;
    s.get("name", t.name);
    s.get("bandwidth_bytes_per_sec", t.bandwidth_bytes_per_sec);
    std::uint64_t base = 1, large = 1;
    s.get("base_latency_ns", base);
    large = base;
    s.get("latency_large_ns", large);
    t.base_latency = SimTime(static_cast<std::int64_t>(base));
    t.latency_large = SimTime(static_cast<std::int64_t>(large));
    if (s.has("capacity_bytes")) {
        const json& v = s.raw("capacity_bytes");
        if (v.is_null())
            t.capacity_bytes = kUnboundedCapacity;
        else if (v.is_number_unsigned())
            t.capacity_bytes = v.get<std::uint64_t>();
        else
            throw ConfigError(s.at("capacity_bytes") + ": expected a byte count or null for unbounded");
    }
    s.get("cost_dollars_per_gb_hour", t.cost_dollars_per_gb_hour);
    s.done();
    try {
        validate(t);
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return t;
}

ordered_json tier_json(const TierSpec& t) {
    ordered_json j;
    j["name"] = t.name;
    j["bandwidth_bytes_per_sec"] = t.bandwidth_bytes_per_sec;
    j["base_latency_ns"] = t.base_latency.count();
    j["latency_large_ns"] = t.latency_large.count();
    j["capacity_bytes"] = t.unbounded() ? ordered_json(nullptr) : ordered_json(t.capacity_bytes);
    j["cost_dollars_per_gb_hour"] = t.cost_dollars_per_gb_hour;
    return j;
}

void read_workload(Section& s, WorkloadSpec& w) {
    if (s.has("family")) {
        const json& v = s.raw("family");
        if (!v.is_string()) throw ConfigError(s.at("family") + ": expected a string");
        try {
            const auto sessions = w.num_sessions;
            w = WorkloadSpec::defaults(parse_workload_family(v.get<std::string>()), sessions, w.seed);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(s.at("family") + ": " + e.what());
        }
    }
    s.get("num_sessions", w.num_sessions);
    s.get("block_tokens", w.block_tokens);
    s.get("bytes_per_token", w.bytes_per_token);
    s.get("mean_input_tokens", w.mean_input_tokens);
    s.get("mean_output_tokens", w.mean_output_tokens);
    s.get("length_sigma", w.length_sigma);
    s.get("shared_prompt_fraction", w.shared_prompt_fraction);
    s.get("prompt_pool_size", w.prompt_pool_size);
    s.get("mean_system_prompt_tokens", w.mean_system_prompt_tokens);
    s.get("prompt_length_sigma", w.prompt_length_sigma);
    s.get("mean_turns", w.mean_turns);
    s.get("reasoning_fraction", w.reasoning_fraction);
    s.get("session_arrival_rate_per_s", w.session_arrival_rate_per_s);
    s.get("mean_think_time_s", w.mean_think_time_s);
    s.get("token_time_ms", w.token_time_ms);
    s.get("prefill_block_time_ms", w.prefill_block_time_ms);
    s.get("num_tools", w.num_tools);
    s.get("min_tool_calls", w.min_tool_calls);
    s.get("max_tool_calls", w.max_tool_calls);
    s.get("tool_context_tokens", w.tool_context_tokens);
    s.get("mean_tool_result_tokens", w.mean_tool_result_tokens);
    s.get("min_reasoning_blocks", w.min_reasoning_blocks);
    s.get("max_reasoning_blocks", w.max_reasoning_blocks);
    s.get("tool_transition_skew", w.tool_transition_skew);
}

ordered_json workload_json(const WorkloadSpec& w) {
    ordered_json j;
    j["family"] = to_string(w.family);
    j["num_sessions"] = w.num_sessions;
    j["block_tokens"] = w.block_tokens;
    j["bytes_per_token"] = w.bytes_per_token;
    j["mean_input_tokens"] = w.mean_input_tokens;
    j["mean_output_tokens"] = w.mean_output_tokens;
    j["length_sigma"] = w.length_sigma;
    j["shared_prompt_fraction"] = w.shared_prompt_fraction;
    j["prompt_pool_size"] = w.prompt_pool_size;
    j["mean_system_prompt_tokens"] = w.mean_system_prompt_tokens;
    j["prompt_length_sigma"] = w.prompt_length_sigma;
    j["mean_turns"] = w.mean_turns;
    j["reasoning_fraction"] = w.reasoning_fraction;
    j["session_arrival_rate_per_s"] = w.session_arrival_rate_per_s;
    j["mean_think_time_s"] = w.mean_think_time_s;
    j["token_time_ms"] = w.token_time_ms;
    j["prefill_block_time_ms"] = w.prefill_block_time_ms;
    j["num_tools"] = w.num_tools;
    j["min_tool_calls"] = w.min_tool_calls;
    j["max_tool_calls"] = w.max_tool_calls;
    j["tool_context_tokens"] = w.tool_context_tokens;
    j["mean_tool_result_tokens"] = w.mean_tool_result_tokens;
    j["min_reasoning_blocks"] = w.min_reasoning_blocks;
    j["max_reasoning_blocks"] = w.max_reasoning_blocks;
    j["tool_transition_skew"] = w.tool_transition_skew;
    return j;
}

json env_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text);
    }
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

template <typename F>
void guard(const std::string& where, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

}  // namespace

std::string RunConfig::calibration_path() const {
    std::filesystem::path p(calibration);
    if (p.is_relative()) {
        const std::string dir = base_dir.empty() ? std::string(KVTIER_DEFAULT_CONFIG_DIR) : base_dir;
        p = std::filesystem::path(dir) / p;
    }
    return p.string();
}

RunConfig default_run_config() {
    RunConfig c;
    c.systems = published_systems();
    return c;
}

Environment process_environment() {
    Environment env;
    for (char** e = environ; e && *e; ++e) {
        std::string entry(*e);
        if (entry.rfind("KVTIER_", 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        env[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
    return env;
}

ModelConfig find_model(const RunConfig& cfg, const std::string& name) {
    for (const auto& m : cfg.models)
        if (m.name == name) return m;
    try {
        return reference_model(name);
    } catch (const std::exception&) {
        throw ConfigError("unknown model '" + name + "'");
    }
}

RunConfig parse_run_config(const std::string& text, const std::string& origin, const Environment& env) {
    json doc;
    try {
        doc = text.empty() ? json::object() : json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(origin + ": top level must be an object");

    std::map<std::string, std::set<std::string>> env_keys;
    for (const auto& [name, value] : env) {
        if (name.rfind("KVTIER_", 0) != 0) continue;
        const std::string rest = name.substr(7);
        const auto us = rest.find('_');
        if (us == std::string::npos) continue;
        const std::string section = lower(rest.substr(0, us));
        const std::string key = lower(rest.substr(us + 1));
        if (std::find(kSections.begin(), kSections.end(), section) == kSections.end() || key.empty()) continue;
        if (!doc.contains(section)) doc[section] = json::object();
        if (!doc[section].is_object()) throw ConfigError(origin + ": " + section + ": expected an object");
        doc[section][key] = env_value(value);
        env_keys[section].insert(key);
    }

    for (const auto& [k, v] : doc.items()) {
        if (std::find(kSections.begin(), kSections.end(), k) == kSections.end())
            throw ConfigError(origin + ": " + k + ": unknown section");
    }

    RunConfig cfg = default_run_config();
    auto section = [&](const char* name, auto&& body) {
        if (!doc.contains(name)) return;
        Section s(doc[name], origin + ": " + name, &env_keys[name], name);
        body(s);
        s.done();
    };
    auto where = [&](const std::string& path) { return origin + ": " + path; };

    section("run", [&](Section& s) {
        s.get("seed", cfg.seed);
        if (s.has("seeds")) {
            cfg.seeds.clear();
            each(s.raw("seeds"), where("run.seeds"), [&](const json& v, const std::string& w) {
                if (!v.is_number_unsigned()) throw ConfigError(w + ": expected a non-negative integer");
                cfg.seeds.push_back(v.get<std::uint64_t>());
            });
        }
    });
    section("sizing", [&](Section& s) {
        s.get("m_target_bytes", cfg.budget.m_target_bytes);
        s.get("n_max", cfg.budget.n_max);
        if (s.has("models")) {
            cfg.models.clear();
            each(s.raw("models"), where("sizing.models"),
                 [&](const json& v, const std::string& w) { cfg.models.push_back(read_model(v, w)); });
        }
    });
    section("hierarchy", [&](Section& s) {
        s.get("capacity_scale", cfg.replay.capacity_scale);
        if (s.has("tiers")) {
            cfg.replay.tiers.clear();
            int index = 0;
            each(s.raw("tiers"), where("hierarchy.tiers"),
                 [&](const json& v, const std::string& w) { cfg.replay.tiers.push_back(read_tier(v, w, index++)); });
        }
    });
    section("replay", [&](Section& s) {
        if (s.has("model")) {
            std::string name;
            s.get("model", name);
            guard(s.at("model"), [&] { cfg.replay.model = find_model(cfg, name); });
        }
        s.get("agentic", cfg.replay.agentic);
        s.get("agentic_smoothing", cfg.replay.agentic_smoothing);
        s.get("agentic_memory_decay", cfg.replay.agentic_memory_decay);
        s.get("session_thresholds", cfg.replay.session_thresholds);
        s.get("debug_invariants", cfg.replay.debug_invariants);
    });
    section("predictor", [&](Section& s) {
        s.get("alpha0", cfg.replay.predictor.alpha0);
        s.get("beta0", cfg.replay.predictor.beta0);
        s.get("window_size", cfg.replay.predictor.window_size);
        s.get("confidence_halfpoint", cfg.replay.predictor.confidence_halfpoint);
    });
    section("eviction", [&](Section& s) {
        s.get("ema_decay", cfg.replay.eviction.ema_decay);
        if (s.has("position_decay_tau")) {
            const json& v = s.raw("position_decay_tau");
            if (v.is_string() && v.get<std::string>() == "inf")
                cfg.replay.eviction.position_decay_tau = std::numeric_limits<double>::infinity();
            else if (v.is_number())
                cfg.replay.eviction.position_decay_tau = v.get<double>();
            else
                throw ConfigError(s.at("position_decay_tau") + ": expected a number or \"inf\"");
        }
    });
    section("prefetch", [&](Section& s) {
        s.get("w_min", cfg.replay.prefetch.w_min);
        s.get("w_max", cfg.replay.prefetch.w_max);
        s.get("enabled", cfg.replay.prefetch.enabled);
    });
    section("value", [&](Section& s) {
        s.get("recompute_cost_per_token_ns", cfg.replay.value.recompute_cost_per_token_ns);
        s.get("gpu_hour_cost", cfg.replay.value.gpu_hour_cost);
        s.get("expected_residency_hours", cfg.replay.value.expected_residency_hours);
        s.get("promotion_threshold", cfg.replay.value.promotion_threshold);
    });
    section("workload", [&](Section& s) { read_workload(s, cfg.workload); });
    section("projection", [&](Section& s) {
        s.get("calibration", cfg.calibration);
        if (s.has("systems")) {
            cfg.systems.clear();
            each(s.raw("systems"), where("projection.systems"), [&](const json& v, const std::string& w) {
                Section r(v, w);
                SystemRow row;
                r.get("system", row.system);
                r.get("ttft_p50_s", row.ttft_p50_s);
                r.get("ttft_p99_s", row.ttft_p99_s);
                r.get("tbt_p99_s", row.tbt_p99_s);
                r.get("throughput", row.throughput);
                r.get("cost_per_mtok", row.cost_per_mtok);
                r.done();
                cfg.systems.push_back(std::move(row));
            });
        }
        if (s.has("ablation_models")) {
            cfg.ablation_models.clear();
            each(s.raw("ablation_models"), where("projection.ablation_models"),
                 [&](const json& v, const std::string& w) {
                     if (!v.is_string()) throw ConfigError(w + ": expected a model name");
                     guard(w, [&] { find_model(cfg, v.get<std::string>()); });
                     cfg.ablation_models.push_back(v.get<std::string>());
                 });
        }
    });
    section("output", [&](Section& s) {
        s.get("metrics", cfg.output.metrics);
        s.get("prometheus", cfg.output.prometheus);
        s.get("agentic_dump", cfg.output.agentic_dump);
    });

    cfg.workload.seed = cfg.seed;
    guard(where("replay"), [&] { validate(cfg.replay); });
    guard(where("workload"), [&] { validate(cfg.workload); });
    guard(where("sizing"), [&] {
        if (cfg.budget.n_max == 0 || cfg.budget.m_target_bytes == 0)
            throw std::invalid_argument("m_target_bytes and n_max must be positive");
        for (const auto& m : cfg.models) validate(m);
    });
    if (cfg.seeds.empty()) throw ConfigError(where("run.seeds: must not be empty"));
    return cfg;
}

RunConfig load_run_config(const std::string& path, const Environment& env) {
    if (path.empty() || path == "defaults") return parse_run_config("{}", "defaults", env);
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig cfg = parse_run_config(ss.str(), path, env);
    cfg.base_dir = std::filesystem::absolute(path).parent_path().string();
    return cfg;
}

std::string run_config_to_json(const RunConfig& c) {
    ordered_json j;
    j["run"] = {{"seed", c.seed}, {"seeds", c.seeds}};
    ordered_json models = ordered_json::array();
    for (const auto& m : c.models) models.push_back(model_json(m));
    j["sizing"] = {{"m_target_bytes", c.budget.m_target_bytes}, {"n_max", c.budget.n_max}, {"models", models}};
    ordered_json tiers = ordered_json::array();
    for (const auto& t : c.replay.tiers) tiers.push_back(tier_json(t));
    j["hierarchy"] = {{"capacity_scale", c.replay.capacity_scale}, {"tiers", tiers}};
    j["replay"] = {{"model", c.replay.model.name},
                   {"agentic", c.replay.agentic},
                   {"agentic_smoothing", c.replay.agentic_smoothing},
                   {"agentic_memory_decay", c.replay.agentic_memory_decay},
                   {"session_thresholds", c.replay.session_thresholds},
                   {"debug_invariants", c.replay.debug_invariants}};
    j["predictor"] = {{"alpha0", c.replay.predictor.alpha0},
                      {"beta0", c.replay.predictor.beta0},
                      {"window_size", c.replay.predictor.window_size},
                      {"confidence_halfpoint", c.replay.predictor.confidence_halfpoint}};
    const double tau = c.replay.eviction.position_decay_tau;
    j["eviction"] = {{"ema_decay", c.replay.eviction.ema_decay},
                     {"position_decay_tau", std::isinf(tau) ? ordered_json("inf") : ordered_json(tau)}};
    j["prefetch"] = {{"w_min", c.replay.prefetch.w_min},
                     {"w_max", c.replay.prefetch.w_max},
                     {"enabled", c.replay.prefetch.enabled}};
    j["value"] = {{"recompute_cost_per_token_ns", c.replay.value.recompute_cost_per_token_ns},
                  {"gpu_hour_cost", c.replay.value.gpu_hour_cost},
                  {"expected_residency_hours", c.replay.value.expected_residency_hours},
                  {"promotion_threshold", c.replay.value.promotion_threshold}};
    j["workload"] = workload_json(c.workload);
    ordered_json systems = ordered_json::array();
    for (const auto& s : c.systems)
        systems.push_back({{"system", s.system},
                           {"ttft_p50_s", s.ttft_p50_s},
                           {"ttft_p99_s", s.ttft_p99_s},
                           {"tbt_p99_s", s.tbt_p99_s},
                           {"throughput", s.throughput},
                           {"cost_per_mtok", s.cost_per_mtok}});
    j["projection"] = {{"calibration", c.calibration}, {"systems", systems}, {"ablation_models", c.ablation_models}};
    j["output"] = {{"metrics", c.output.metrics},
                   {"prometheus", c.output.prometheus},
                   {"agentic_dump", c.output.agentic_dump}};
    return j.dump(2) + "\n";
}

}  // namespace kvtier
