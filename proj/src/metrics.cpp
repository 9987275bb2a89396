// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "kvtier/sizing.hpp"

namespace kvtier {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::array<const char*, 4> kClassNames = {"light", "medium", "heavy", "extreme"};

template <typename T, std::size_t N>
ordered_json arr(const std::array<T, N>& a) {
    return ordered_json(std::vector<T>(a.begin(), a.end()));
}

ordered_json run_json(const RunRecord& r, bool wall) {
    const ReplayMetrics& m = r.metrics;
    ordered_json j;
    j["workload"] = r.workload;
    j["policy"] = to_string(m.policy);
    j["seed"] = m.seed;
    j["accesses"] = m.accesses;
    j["hits"] = arr(m.hits);
    j["misses"] = m.misses;
    j["hit_rate_t01"] = m.hit_rate_t01();
    j["promotions"] = arr(m.promotions);
    j["demotions"] = arr(m.demotions);
    j["used_bytes"] = arr(m.used_bytes);
    j["drops"] = m.drops;
    j["prefetches"] = m.prefetches;
    j["tool_calls"] = m.tool_calls;
    j["reserved_bytes"] = m.reserved_bytes;
    ordered_json classes;
    for (std::size_t i = 0; i < kClassNames.size(); ++i) classes[kClassNames[i]] = m.session_classes[i];
    j["session_classes"] = std::move(classes);
    j["recompute_ns_charged"] = m.recompute_ns_charged;
    j["recompute_ns_saved"] = m.recompute_ns_saved;
    j["invariant_checks"] = m.invariant_checks;
    if (wall) j["wall_time_s"] = m.wall_time_s;
    return j;
}

template <typename T>
T field(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

template <typename T, std::size_t N>
void read_array(const json& j, const std::string& where, const char* key, std::array<T, N>& out) {
    if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != N)
        throw ConfigError(where + "." + key + ": expected " + std::to_string(N) + " values");
    for (std::size_t i = 0; i < N; ++i) {
        try {
            out[i] = j.at(key)[i].get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where + "." + key + ": wrong type");
        }
    }
}

std::string label_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '\\' || c == '"') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string pct(double v, const char* f = "%.1f") {
    char buf[32];
    std::snprintf(buf, sizeof buf, f, 100.0 * v);
    return buf;
}

}  // namespace

std::string metrics_to_json(const MetricsDocument& doc, bool include_wall_time) {
    ordered_json j;
    j["schema_version"] = doc.schema_version;
    ordered_json runs = ordered_json::array();
    for (const auto& r : doc.runs) runs.push_back(run_json(r, include_wall_time));
    j["runs"] = std::move(runs);
    return j.dump(2) + "\n";
}

MetricsDocument metrics_from_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(origin + ": expected an object");
    MetricsDocument doc;
    doc.schema_version = field<int>(j, origin, "schema_version");
    if (!j.contains("runs") || !j.at("runs").is_array()) throw ConfigError(origin + ": 'runs' must be an array");
    for (std::size_t i = 0; i < j.at("runs").size(); ++i) {
        const json& r = j.at("runs")[i];
        const std::string w = origin + ": runs[" + std::to_string(i) + "]";
        RunRecord rec;
        ReplayMetrics& m = rec.metrics;
        rec.workload = field<std::string>(r, w, "workload");
        try {
            m.policy = parse_policy(field<std::string>(r, w, "policy"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(w + ".policy: " + e.what());
        }
        m.seed = field<std::uint64_t>(r, w, "seed");
        m.accesses = field<std::uint64_t>(r, w, "accesses");
        read_array(r, w, "hits", m.hits);
        m.misses = field<std::uint64_t>(r, w, "misses");
        read_array(r, w, "promotions", m.promotions);
        read_array(r, w, "demotions", m.demotions);
        read_array(r, w, "used_bytes", m.used_bytes);
        m.drops = field<std::uint64_t>(r, w, "drops");
        m.prefetches = field<std::uint64_t>(r, w, "prefetches");
        m.tool_calls = field<std::uint64_t>(r, w, "tool_calls");
        m.reserved_bytes = field<double>(r, w, "reserved_bytes");
        if (!r.contains("session_classes") || !r.at("session_classes").is_object())
            throw ConfigError(w + ": missing 'session_classes'");
        for (std::size_t c = 0; c < kClassNames.size(); ++c)
            m.session_classes[c] = field<std::uint64_t>(r.at("session_classes"), w + ".session_classes", kClassNames[c]);
        m.recompute_ns_charged = field<double>(r, w, "recompute_ns_charged");
        m.recompute_ns_saved = field<double>(r, w, "recompute_ns_saved");
        m.invariant_checks = field<std::uint64_t>(r, w, "invariant_checks");
        if (r.contains("wall_time_s")) m.wall_time_s = field<double>(r, w, "wall_time_s");
        std::uint64_t hits = 0;
        for (auto h : m.hits) hits += h;
        if (hits + m.misses != m.accesses) throw ConfigError(w + ": hits + misses != accesses");
        doc.runs.push_back(std::move(rec));
    }
    return doc;
}

MetricsDocument read_metrics_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metrics file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return metrics_from_json(ss.str(), path);
}

std::string prometheus_text(const MetricsDocument& doc) {
    std::ostringstream out;
    auto family = [&](const char* name, const char* type, const char* help, auto&& value_of) {
        out << "# HELP " << name << ' ' << help << '\n' << "# TYPE " << name << ' ' << type << '\n';
        for (const auto& r : doc.runs) {
            const std::string labels = "workload=\"" + label_escape(r.workload) + "\",policy=\"" +
                                       std::string(to_string(r.metrics.policy)) + "\",seed=\"" +
                                       std::to_string(r.metrics.seed) + "\"";
            value_of(r.metrics, labels);
        }
    };
    auto scalar = [&](const char* name, const char* type, const char* help, auto get) {
        family(name, type, help, [&](const ReplayMetrics& m, const std::string& labels) {
            out << name << '{' << labels << "} " << num(static_cast<double>(get(m))) << '\n';
        });
    };
    auto per_tier = [&](const char* name, const char* help, auto get) {
        family(name, "counter", help, [&](const ReplayMetrics& m, const std::string& labels) {
            for (int t = 0; t < kNumTiers; ++t)
                out << name << '{' << labels << ",tier=\"" << t << "\"} " << num(static_cast<double>(get(m)[t])) << '\n';
        });
    };
    scalar("kvtier_block_accesses_total", "counter", "Block access events replayed.",
           [](const ReplayMetrics& m) { return m.accesses; });
    per_tier("kvtier_tier_hits_total", "Accesses served by each tier.", [](const ReplayMetrics& m) { return m.hits; });
    scalar("kvtier_misses_total", "counter", "Accesses that found the block in no tier.",
           [](const ReplayMetrics& m) { return m.misses; });
    scalar("kvtier_hit_rate_t01", "gauge", "Fraction of accesses served by tier 0 or 1.",
           [](const ReplayMetrics& m) { return m.hit_rate_t01(); });
    per_tier("kvtier_promotions_total", "Promotions into each tier.",
             [](const ReplayMetrics& m) { return m.promotions; });
    per_tier("kvtier_demotions_total", "Demotions into each tier.", [](const ReplayMetrics& m) { return m.demotions; });
    scalar("kvtier_drops_total", "counter", "Blocks dropped because no slower tier had room.",
           [](const ReplayMetrics& m) { return m.drops; });
    scalar("kvtier_prefetches_total", "counter", "Promotions started ahead of demand.",
           [](const ReplayMetrics& m) { return m.prefetches; });
    scalar("kvtier_tool_calls_total", "counter", "Tool call events replayed.",
           [](const ReplayMetrics& m) { return m.tool_calls; });
    scalar("kvtier_recompute_seconds_charged_total", "counter", "Simulated prefill recompute charged for misses.",
           [](const ReplayMetrics& m) { return m.recompute_ns_charged * 1e-9; });
    scalar("kvtier_recompute_seconds_saved_total", "counter", "Simulated recompute avoided by hits, net of transfer.",
           [](const ReplayMetrics& m) { return m.recompute_ns_saved * 1e-9; });
    return out.str();
}

MetricsDocument merge_metrics(const std::vector<std::pair<std::string, MetricsDocument>>& sources) {
    if (sources.empty()) throw std::invalid_argument("report needs at least one metrics file");
    MetricsDocument merged;
    merged.schema_version = sources.front().second.schema_version;
    for (const auto& [name, doc] : sources) {
        if (doc.schema_version != merged.schema_version)
            throw SchemaMismatch("schema version mismatch: " + sources.front().first + " has version " +
                                 std::to_string(merged.schema_version) + ", " + name + " has version " +
                                 std::to_string(doc.schema_version));
        merged.runs.insert(merged.runs.end(), doc.runs.begin(), doc.runs.end());
    }
    return merged;
}

std::vector<ComparisonRow> compare_runs(const MetricsDocument& doc) {
    std::vector<std::string> order;
    std::map<std::string, std::map<PolicyKind, std::vector<ReplayMetrics>>> grouped;
    for (const auto& r : doc.runs) {
        if (!grouped.count(r.workload)) order.push_back(r.workload);
        grouped[r.workload][r.metrics.policy].push_back(r.metrics);
    }
    std::vector<ComparisonRow> rows;
    for (const auto& w : order) {
        ComparisonRow row;
        row.workload = w;
        for (auto& [policy, runs] : grouped[w]) {
            std::sort(runs.begin(), runs.end(),
                      [](const ReplayMetrics& a, const ReplayMetrics& b) { return a.seed < b.seed; });
            row.policies[policy] = summarize(runs);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

TableFormat parse_table_format(std::string_view s) {
    if (s == "text") return TableFormat::text;
    if (s == "csv") return TableFormat::csv;
    if (s == "json") return TableFormat::json;
    throw std::invalid_argument("unknown format '" + std::string(s) + "' (text, csv, json)");
}

std::string format_comparison(const std::vector<ComparisonRow>& rows, TableFormat format) {
    auto gap = [](const ComparisonRow& r) -> std::optional<double> {
        auto b = r.policies.find(PolicyKind::Bayesian), l = r.policies.find(PolicyKind::LRU);
        if (b == r.policies.end() || l == r.policies.end()) return std::nullopt;
        return b->second.mean_hit_rate - l->second.mean_hit_rate;
    };
    std::ostringstream out;
    if (format == TableFormat::json) {
        ordered_json j = ordered_json::array();
        for (const auto& r : rows) {
            ordered_json row;
            row["workload"] = r.workload;
            for (auto p : kAllPolicies) {
                auto it = r.policies.find(p);
                if (it == r.policies.end()) continue;
                row[std::string(to_string(p))] = {{"mean_hit_rate", it->second.mean_hit_rate},
                                                  {"stdev_hit_rate", it->second.stdev_hit_rate},
                                                  {"runs", it->second.runs.size()}};
            }
            if (auto g = gap(r)) row["bayesian_minus_lru_pp"] = 100.0 * *g;
            j.push_back(std::move(row));
        }
        return ordered_json{{"schema_version", kMetricsSchemaVersion}, {"rows", j}}.dump(2) + "\n";
    }
    if (format == TableFormat::csv) {
        out << "workload";
        for (auto p : kAllPolicies) out << ',' << to_string(p) << "_mean," << to_string(p) << "_stdev," << to_string(p) << "_runs";
        out << ",bayesian_minus_lru_pp\n";
        for (const auto& r : rows) {
            out << r.workload;
            for (auto p : kAllPolicies) {
                auto it = r.policies.find(p);
                if (it == r.policies.end()) {
                    out << ",,,";
                    continue;
                }
                out << ',' << num(it->second.mean_hit_rate) << ',' << num(it->second.stdev_hit_rate) << ','
                    << it->second.runs.size();
            }
            out << ',';
            if (auto g = gap(r)) out << num(100.0 * *g);
            out << '\n';
        }
        return out.str();
    }
    char line[256];
    std::snprintf(line, sizeof line, "%-24s %16s %16s %16s %10s\n", "Workload", "LRU hit", "EMA hit", "Bayesian hit",
                  "Gap (pp)");
    out << line;
    for (const auto& r : rows) {
        std::string cells[3];
        for (std::size_t i = 0; i < kAllPolicies.size(); ++i) {
            auto it = r.policies.find(kAllPolicies[i]);
            cells[i] = it == r.policies.end()
                           ? "-"
                           : pct(it->second.mean_hit_rate) + "+-" + pct(it->second.stdev_hit_rate) + "%";
        }
        const auto g = gap(r);
        std::snprintf(line, sizeof line, "%-24s %16s %16s %16s %10s\n", r.workload.c_str(), cells[0].c_str(),
                      cells[1].c_str(), cells[2].c_str(), g ? pct(*g, "%+.1f").c_str() : "-");
        out << line;
    }
    return out.str();
}

}  // namespace kvtier
