// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "kvtier/replay.hpp"

namespace kvtier {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kGB = 1e9;

double sum(const HitMix& mix) {
    double s = 0.0;
    for (double f : mix) s += f;
    return s;
}

struct BlockCost {
    std::uint64_t bytes = 0;
    double compute_ns = 0.0;
    double recompute_ns = 0.0;
};

BlockCost block_cost(const ModelConfig& model, const Calibration& c) {
    const std::uint32_t tokens = block_tokens_for_arch(infer_architecture(model));
    return {sequence_kv_bytes(model, tokens), tokens * c.compute_ns_per_token, tokens * c.recompute_cost_per_token_ns};
}

const TierSpec* find_tier(const std::vector<TierSpec>& hierarchy, int index) {
    for (const auto& t : hierarchy)
        if (t.tier_index == index) return &t;
    return nullptr;
}

double gpu_term(double gpu_hour_cost, double throughput) { return gpu_hour_cost * 1e6 / (throughput * 3600.0); }

/// Dollars per hour of occupied non-HBM capacity per GPU at full occupancy.
double occupancy_rate(const std::vector<TierSpec>& hierarchy, double gpus) {
    double rate = 0.0;
    for (const auto& t : hierarchy) {
        if (t.tier_index == 0 || t.unbounded()) continue;
        rate += static_cast<double>(t.capacity_bytes) / kGB / gpus * t.cost_dollars_per_gb_hour;
    }
    return rate;
}

std::vector<TierSpec> first_tiers(int n) {
    auto all = default_tier_specs();
    all.resize(static_cast<std::size_t>(n));
    return all;
}

ordered_json mix_json(const HitMix& m) { return ordered_json(std::vector<double>(m.begin(), m.end())); }

}  // namespace

void validate_mix(const HitMix& mix) {
    for (double f : mix)
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("hit fractions must lie in [0, 1]");
    if (sum(mix) > 1.0 + 1e-9) throw std::invalid_argument("hit fractions sum above 1");
}

HitMix mix_from_metrics(const ReplayMetrics& m) {
    HitMix mix{};
    if (m.accesses == 0) return mix;
    for (int t = 0; t < kNumTiers; ++t) mix[t] = static_cast<double>(m.hits[t]) / static_cast<double>(m.accesses);
    return mix;
}

const HitMix& Calibration::full_mix() const {
    if (tier_rows.empty()) return anchor_mix;
    return tier_rows.back().mix;
}

Calibration fit_calibration(const CalibrationTargets& t) {
    Calibration c;
    c.model = t.model;
    c.saturation_throughput = t.saturation_throughput;
    c.compute_ns_per_token = t.compute_ns_per_token;
    c.recompute_cost_per_token_ns = t.recompute_cost_per_token_ns;
    c.gpus_per_node = t.gpus_per_node;
    c.anchor = t.anchor;
    c.gpu_hour_cost = t.gpu_hour_cost;
    c.anchor_mix = {};
    c.anchor_mix[0] = t.anchor_tier0_fraction;

    const ModelConfig model = reference_model(t.model);
    const BlockCost block = block_cost(model, c);
    const auto specs = default_tier_specs();
    if (t.tier_throughputs.size() + 1 > specs.size())
        throw std::domain_error("more calibration rows than tiers");

    ProjectionInputs in;
    in.model = model;
    in.hierarchy = specs;
    in.calibration = c;
    const double s_anchor = expected_stall_ns(in, c.anchor_mix);
    const double base = block.compute_ns + s_anchor;

    c.tier_rows.push_back({"GPU-only", 1, c.anchor_mix});
    HitMix mix = c.anchor_mix;
    double s_prev = s_anchor;
    for (std::size_t i = 0; i < t.tier_throughputs.size(); ++i) {
        const auto& [label, target] = t.tier_throughputs[i];
        if (!(target > 0.0 && target <= t.saturation_throughput))
            throw std::domain_error("row '" + label + "' throughput outside (0, saturation]");
        const int tier = static_cast<int>(i) + 1;
        const double s_target = base * t.anchor.throughput / target - block.compute_ns;
        const double transfer = transfer_ns(specs[static_cast<std::size_t>(tier)], block.bytes);
        const double f = (s_target - s_prev) / (transfer - block.recompute_ns);
        if (!(f >= 0.0 && f <= 1.0 - sum(mix) + 1e-12))
            throw std::domain_error("row '" + label + "' needs an infeasible hit fraction");
        mix[static_cast<std::size_t>(tier)] = f;
        s_prev = s_target;
        c.tier_rows.push_back({label, tier + 1, mix});
    }

    const double s_full = s_prev * 1e-9;
    const double s_base = s_anchor * 1e-9;
    auto fit = [&](double at_anchor, double at_full) {
        LatencyFit f;
        f.accesses = (at_anchor - at_full) / (s_base - s_full);
        f.compute_s = at_anchor - f.accesses * s_base;
        return f;
    };
    c.ttft_p50 = fit(t.anchor.ttft_p50_s, t.full_ttft_p50_s);
    c.ttft_p99 = fit(t.anchor.ttft_p99_s, t.full_ttft_p99_s);
    c.tbt_p99 = fit(t.anchor.tbt_p99_s, t.full_tbt_p99_s);

    c.cost_calibration = t.anchor_cost / gpu_term(t.gpu_hour_cost, t.anchor.throughput);
    const double full_tput = t.tier_throughputs.empty() ? t.anchor.throughput : t.tier_throughputs.back().second;
    const double needed = t.full_cost / c.cost_calibration - gpu_term(t.gpu_hour_cost, full_tput);
    const double rate = occupancy_rate(specs, t.gpus_per_node) * 1e6 / (full_tput * 3600.0);
    c.occupancy_fraction = rate > 0.0 ? needed / rate : 0.0;
    if (c.occupancy_fraction < 0.0) throw std::domain_error("full-system cost below its GPU-hour term");
    return c;
}

std::string calibration_to_json(const Calibration& c) {
    ordered_json j;
    j["model"] = c.model;
    j["saturation_throughput"] = c.saturation_throughput;
    j["compute_ns_per_token"] = c.compute_ns_per_token;
    j["recompute_cost_per_token_ns"] = c.recompute_cost_per_token_ns;
    j["gpus_per_node"] = c.gpus_per_node;
    j["gpu_hour_cost"] = c.gpu_hour_cost;
    j["anchor"] = {{"ttft_p50_s", c.anchor.ttft_p50_s},
                   {"ttft_p99_s", c.anchor.ttft_p99_s},
                   {"tbt_p99_s", c.anchor.tbt_p99_s},
                   {"throughput", c.anchor.throughput}};
    j["anchor_mix"] = mix_json(c.anchor_mix);
    ordered_json rows = ordered_json::array();
    for (const auto& r : c.tier_rows)
        rows.push_back({{"label", r.label}, {"tiers_enabled", r.tiers_enabled}, {"mix", mix_json(r.mix)}});
    j["tier_rows"] = std::move(rows);
    auto lat = [](const LatencyFit& f) { return ordered_json{{"compute_s", f.compute_s}, {"accesses", f.accesses}}; };
    j["ttft_p50"] = lat(c.ttft_p50);
    j["ttft_p99"] = lat(c.ttft_p99);
    j["tbt_p99"] = lat(c.tbt_p99);
    j["cost_calibration"] = c.cost_calibration;
    j["occupancy_fraction"] = c.occupancy_fraction;
    return j.dump(2) + "\n";
}

namespace {

void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end())
            throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

template <typename T>
T need(const nlohmann::json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

HitMix read_mix(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.size() != kNumTiers) throw ConfigError(where + ": expected " + std::to_string(kNumTiers) + " fractions");
    HitMix m{};
    for (int t = 0; t < kNumTiers; ++t) {
        if (!j[static_cast<std::size_t>(t)].is_number()) throw ConfigError(where + ": fractions must be numbers");
        m[t] = j[static_cast<std::size_t>(t)].get<double>();
    }
    try {
        validate_mix(m);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return m;
}

}  // namespace

Calibration calibration_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("calibration: ") + e.what());
    }
    check_keys(j, "calibration",
               {"model", "saturation_throughput", "compute_ns_per_token", "recompute_cost_per_token_ns",
                "gpus_per_node", "gpu_hour_cost", "anchor", "anchor_mix", "tier_rows", "ttft_p50", "ttft_p99",
                "tbt_p99", "cost_calibration", "occupancy_fraction"});
    Calibration c;
    const std::string w = "calibration";
    c.model = need<std::string>(j, w, "model");
    c.saturation_throughput = need<double>(j, w, "saturation_throughput");
    c.compute_ns_per_token = need<double>(j, w, "compute_ns_per_token");
    c.recompute_cost_per_token_ns = need<double>(j, w, "recompute_cost_per_token_ns");
    c.gpus_per_node = need<double>(j, w, "gpus_per_node");
    c.gpu_hour_cost = need<double>(j, w, "gpu_hour_cost");
    const auto& a = j.at("anchor");
    check_keys(a, w + ".anchor", {"ttft_p50_s", "ttft_p99_s", "tbt_p99_s", "throughput"});
    c.anchor.ttft_p50_s = need<double>(a, w + ".anchor", "ttft_p50_s");
    c.anchor.ttft_p99_s = need<double>(a, w + ".anchor", "ttft_p99_s");
    c.anchor.tbt_p99_s = need<double>(a, w + ".anchor", "tbt_p99_s");
    c.anchor.throughput = need<double>(a, w + ".anchor", "throughput");
    if (!j.contains("anchor_mix")) throw ConfigError(w + ": missing key 'anchor_mix'");
    c.anchor_mix = read_mix(j.at("anchor_mix"), w + ".anchor_mix");
    if (!j.contains("tier_rows") || !j.at("tier_rows").is_array()) throw ConfigError(w + ": tier_rows must be an array");
    for (std::size_t i = 0; i < j.at("tier_rows").size(); ++i) {
        const auto& r = j.at("tier_rows")[i];
        const std::string rw = w + ".tier_rows[" + std::to_string(i) + "]";
        check_keys(r, rw, {"label", "tiers_enabled", "mix"});
        TierRow row;
        row.label = need<std::string>(r, rw, "label");
        row.tiers_enabled = need<int>(r, rw, "tiers_enabled");
        if (row.tiers_enabled < 1 || row.tiers_enabled > kNumTiers) throw ConfigError(rw + ": tiers_enabled out of range");
        if (!r.contains("mix")) throw ConfigError(rw + ": missing key 'mix'");
        row.mix = read_mix(r.at("mix"), rw + ".mix");
        c.tier_rows.push_back(std::move(row));
    }
    auto lat = [&](const char* key) {
        const std::string lw = w + "." + key;
        if (!j.contains(key)) throw ConfigError(w + ": missing key '" + key + "'");
        check_keys(j.at(key), lw, {"compute_s", "accesses"});
        return LatencyFit{need<double>(j.at(key), lw, "compute_s"), need<double>(j.at(key), lw, "accesses")};
    };
    c.ttft_p50 = lat("ttft_p50");
    c.ttft_p99 = lat("ttft_p99");
    c.tbt_p99 = lat("tbt_p99");
    c.cost_calibration = need<double>(j, w, "cost_calibration");
    c.occupancy_fraction = need<double>(j, w, "occupancy_fraction");
    if (!(c.saturation_throughput > 0 && c.cost_calibration > 0 && c.occupancy_fraction >= 0 && c.gpus_per_node > 0))
        throw ConfigError(w + ": saturation, cost factor and GPU count must be positive, occupancy non-negative");
    return c;
}

Calibration load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open calibration file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return calibration_from_json(ss.str());
}

std::string_view to_string(AblationComponent c) {
    switch (c) {
        case AblationComponent::sizing: return "sizing";
        case AblationComponent::bayesian: return "bayesian";
        case AblationComponent::multitier: return "multitier";
        case AblationComponent::head_eviction: return "head_eviction";
        case AblationComponent::dedup: return "dedup";
        case AblationComponent::rope: return "rope";
    }
    return "?";
}

AblationComponent parse_ablation(std::string_view s) {
    for (auto c : kAllAblations)
        if (to_string(c) == s) return c;
    throw std::invalid_argument("unknown ablation component '" + std::string(s) + "'");
}

void validate(const ProjectionInputs& in) {
    if (in.hierarchy.empty()) throw std::invalid_argument("projection needs at least one tier");
    if (!find_tier(in.hierarchy, 0)) throw std::invalid_argument("projection hierarchy must include tier 0");
    std::set<int> seen;
    for (const auto& t : in.hierarchy) {
        validate(t);
        if (!seen.insert(t.tier_index).second) throw std::invalid_argument("duplicate tier in projection hierarchy");
    }
    validate(in.model);
    validate_mix(in.hit_fractions);
    validate_mix(in.calibration.anchor_mix);
    for (const auto& [c, m] : in.fallback_mixes) validate_mix(m);
    if (in.anchor_batch_size == 0) throw std::invalid_argument("anchor batch size must be positive");
    if (!(in.anchor.throughput > 0 && in.gpu_hour_cost >= 0 && in.calibration.saturation_throughput > 0))
        throw std::invalid_argument("anchor throughput and saturation must be positive");
}

ProjectionInputs calibrated_inputs(const Calibration& c, const ModelConfig& model, const SizingBudget& budget) {
    ProjectionInputs in;
    in.model = model;
    in.hierarchy = default_tier_specs();
    in.hit_fractions = c.full_mix();
    in.budget = budget;
    in.batch_size = max_batch_size(model, budget);
    in.anchor_batch_size = std::max<std::uint64_t>(1, in.batch_size);
    in.anchor = c.anchor;
    in.gpu_hour_cost = c.gpu_hour_cost;
    in.calibration = c;
    return in;
}

CapacityProjection project_capacity(const std::vector<TierSpec>& hierarchy) {
    if (hierarchy.empty()) throw std::invalid_argument("projection needs at least one tier");
    CapacityProjection cap;
    for (const auto& t : hierarchy) {
        if (t.unbounded())
            cap.open_ended = true;
        else
            cap.bytes += t.capacity_bytes;
    }
    return cap;
}

double expected_stall_ns(const ProjectionInputs& in, const HitMix& mix) {
    validate_mix(mix);
    const BlockCost block = block_cost(in.model, in.calibration);
    double stall = 0.0;
    double served = 0.0;
    for (int t = 0; t < kNumTiers; ++t) {
        if (mix[t] == 0.0) continue;
        const TierSpec* spec = find_tier(in.hierarchy, t);
        if (!spec) continue;
        served += mix[t];
        if (t > 0) stall += mix[t] * transfer_ns(*spec, block.bytes);
    }
    return stall + std::max(0.0, 1.0 - served) * block.recompute_ns;
}

double project_throughput(const ProjectionInputs& in) {
    validate(in);
    const double compute = block_cost(in.model, in.calibration).compute_ns;
    const double ratio = static_cast<double>(in.batch_size) / static_cast<double>(in.anchor_batch_size);
    const double service = (compute + expected_stall_ns(in, in.calibration.anchor_mix)) /
                           (compute + expected_stall_ns(in, in.hit_fractions));
    return std::min(in.calibration.saturation_throughput, in.anchor.throughput * ratio * service);
}

TtftProjection project_ttft(const ProjectionInputs& in) {
    validate(in);
    const double s = expected_stall_ns(in, in.hit_fractions) * 1e-9;
    const auto& c = in.calibration;
    return {c.ttft_p50.compute_s + c.ttft_p50.accesses * s, c.ttft_p99.compute_s + c.ttft_p99.accesses * s};
}

double project_tbt(const ProjectionInputs& in) {
    validate(in);
    const double s = expected_stall_ns(in, in.hit_fractions) * 1e-9;
    return in.calibration.tbt_p99.compute_s + in.calibration.tbt_p99.accesses * s;
}

double project_cost(const ProjectionInputs& in, double throughput) {
    if (!(throughput > 0.0)) throw std::invalid_argument("cost needs positive throughput");
    const auto& c = in.calibration;
    const double occupancy = c.occupancy_fraction * occupancy_rate(in.hierarchy, c.gpus_per_node);
    return c.cost_calibration * (gpu_term(in.gpu_hour_cost, throughput) + occupancy * 1e6 / (throughput * 3600.0));
}

double ablation(const ProjectionInputs& in, AblationComponent component) {
    const double full = project_throughput(in);
    ProjectionInputs reverted = in;
    switch (component) {
        case AblationComponent::sizing: {
            const std::uint64_t arch = max_batch_size(in.model, in.budget);
            const std::uint64_t mha = max_batch_size(mha_equivalent(in.model), in.budget);
            if (arch == 0) throw std::invalid_argument("model does not fit the sizing budget");
            reverted.batch_size = static_cast<std::uint64_t>(
                std::llround(static_cast<double>(in.batch_size) * static_cast<double>(mha) / static_cast<double>(arch)));
            if (reverted.batch_size == 0 && mha > 0) reverted.batch_size = 1;
            if (mha == 0) reverted.batch_size = 0;
            break;
        }
        case AblationComponent::multitier: {
            reverted.hierarchy.erase(std::remove_if(reverted.hierarchy.begin(), reverted.hierarchy.end(),
                                                    [](const TierSpec& t) { return t.tier_index != 0; }),
                                     reverted.hierarchy.end());
            HitMix m{};
            m[0] = in.hit_fractions[0];
            reverted.hit_fractions = m;
            break;
        }
        default: {
            auto it = in.fallback_mixes.find(component);
            if (it != in.fallback_mixes.end()) reverted.hit_fractions = it->second;
            break;
        }
    }
    const double after = reverted.batch_size == 0 ? 0.0 : project_throughput(reverted);
    return 100.0 * (after / full - 1.0);
}

ProjectionRow project_row(const std::string& label, const ProjectionInputs& in) {
    ProjectionRow row;
    row.configuration = label;
    row.capacity = project_capacity(in.hierarchy);
    const auto ttft = project_ttft(in);
    row.ttft_p50_s = ttft.p50_s;
    row.ttft_p99_s = ttft.p99_s;
    row.tbt_p99_s = project_tbt(in);
    row.throughput = project_throughput(in);
    row.cost_per_mtok = project_cost(in, row.throughput);
    return row;
}

ProjectionReport build_report(const ReportSetup& setup) {
    ProjectionReport r;
    r.sizing = fleet_report(setup.fleet, setup.budget);
    const auto& c = setup.calibration;
    const ProjectionInputs base = calibrated_inputs(c, reference_model(c.model), setup.budget);
    for (const auto& row : c.tier_rows) {
        ProjectionInputs in = base;
        in.hierarchy = first_tiers(row.tiers_enabled);
        in.hit_fractions = row.mix;
        r.tiers.push_back(project_row(row.label, in));
    }
    r.systems = setup.systems;
    r.ours = project_row("Ours (projected)", base);
    for (const auto& col : setup.ablation_columns) r.ablation_columns.push_back(col.label);
    for (auto comp : kAllAblations) {
        std::vector<double> deltas;
        for (const auto& col : setup.ablation_columns) deltas.push_back(ablation(col.inputs, comp));
        r.ablation.emplace_back(comp, std::move(deltas));
    }
    return r;
}

ReportFormat parse_report_format(std::string_view s) {
    if (s == "table") return ReportFormat::table;
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    throw std::invalid_argument("unknown format '" + std::string(s) + "' (table, csv, json)");
}

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string pad(const std::string& s, std::size_t w, bool right = false) {
    if (s.size() >= w) return s;
    return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
}

ordered_json row_json(const ProjectionRow& r) {
    return {{"configuration", r.configuration},
            {"capacity_bytes", r.capacity.bytes},
            {"capacity_open_ended", r.capacity.open_ended},
            {"ttft_p50_s", r.ttft_p50_s},
            {"ttft_p99_s", r.ttft_p99_s},
            {"tbt_p99_s", r.tbt_p99_s},
            {"throughput", r.throughput},
            {"cost_per_mtok", r.cost_per_mtok}};
}

}  // namespace

std::string capacity_label(const CapacityProjection& c) {
    const double gb = static_cast<double>(c.bytes) / kGB;
    std::string s = gb < 1000.0 ? fmt("%.0f GB", gb) : fmt("%.1f TB", gb / 1000.0);
    if (s.size() > 5 && s.compare(s.size() - 5, 2, ".0") == 0) s.erase(s.size() - 5, 2);
    if (c.open_ended) s.insert(s.size() - 3, "+");
    return s;
}

std::string format_report(const ProjectionReport& r, ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::json) {
        ordered_json j;
        ordered_json sizing = ordered_json::array();
        for (const auto& f : r.sizing)
            sizing.push_back({{"model", f.name},
                              {"architecture", to_string(f.arch)},
                              {"mha_batch", f.mha_batch},
                              {"arch_batch", f.arch_batch},
                              {"gain", f.mha_batch ? static_cast<double>(f.arch_batch) / f.mha_batch : 0.0}});
        j["sizing"] = std::move(sizing);
        ordered_json tiers = ordered_json::array();
        for (const auto& t : r.tiers) tiers.push_back(row_json(t));
        j["tiers"] = std::move(tiers);
        ordered_json systems = ordered_json::array();
        for (const auto& s : r.systems)
            systems.push_back({{"system", s.system},
                               {"ttft_p50_s", s.ttft_p50_s},
                               {"ttft_p99_s", s.ttft_p99_s},
                               {"tbt_p99_s", s.tbt_p99_s},
                               {"throughput", s.throughput},
                               {"cost_per_mtok", s.cost_per_mtok}});
        j["systems"] = std::move(systems);
        j["ours"] = row_json(r.ours);
        ordered_json abl = ordered_json::object();
        for (const auto& [comp, deltas] : r.ablation) {
            ordered_json row = ordered_json::object();
            for (std::size_t i = 0; i < deltas.size(); ++i) row[r.ablation_columns[i]] = deltas[i];
            abl[std::string(to_string(comp))] = std::move(row);
        }
        j["ablation_pct"] = std::move(abl);
        return j.dump(2) + "\n";
    }

    if (format == ReportFormat::csv) {
        out << "section,model,architecture,mha_batch,arch_batch,gain\n";
        for (const auto& f : r.sizing)
            out << "sizing," << f.name << ',' << to_string(f.arch) << ',' << f.mha_batch << ',' << f.arch_batch << ','
                << fmt("%.2f", f.mha_batch ? static_cast<double>(f.arch_batch) / f.mha_batch : 0.0) << '\n';
        out << "\nsection,configuration,capacity_bytes,open_ended,ttft_p50_s,ttft_p99_s,tbt_p99_s,throughput,cost_per_mtok\n";
        auto csv_row = [&](const char* section, const ProjectionRow& t) {
            out << section << ',' << t.configuration << ',' << t.capacity.bytes << ',' << (t.capacity.open_ended ? 1 : 0)
                << ',' << fmt("%.4f", t.ttft_p50_s) << ',' << fmt("%.4f", t.ttft_p99_s) << ','
                << fmt("%.5f", t.tbt_p99_s) << ',' << fmt("%.1f", t.throughput) << ','
                << fmt("%.4f", t.cost_per_mtok) << '\n';
        };
        for (const auto& t : r.tiers) csv_row("tiers", t);
        for (const auto& s : r.systems)
            out << "systems," << s.system << ",,," << fmt("%.4f", s.ttft_p50_s) << ',' << fmt("%.4f", s.ttft_p99_s)
                << ',' << fmt("%.5f", s.tbt_p99_s) << ',' << fmt("%.1f", s.throughput) << ','
                << fmt("%.4f", s.cost_per_mtok) << '\n';
        csv_row("systems", r.ours);
        out << "\nsection,component";
        for (const auto& c : r.ablation_columns) out << ',' << c;
        out << '\n';
        for (const auto& [comp, deltas] : r.ablation) {
            out << "ablation," << to_string(comp);
            for (double d : deltas) out << ',' << fmt("%.2f", d);
            out << '\n';
        }
        return out.str();
    }

    out << "Batch size, MHA-equivalent vs architecture-aware\n";
    out << pad("Model", 16) << pad("Arch", 6) << pad("MHA batch", 11, true) << pad("Arch batch", 12, true)
        << pad("Gain", 8, true) << '\n';
    for (const auto& f : r.sizing)
        out << pad(f.name, 16) << pad(std::string(to_string(f.arch)), 6) << pad(std::to_string(f.mha_batch), 11, true)
            << pad(std::to_string(f.arch_batch), 12, true)
            << pad(fmt("%.1fx", f.mha_batch ? static_cast<double>(f.arch_batch) / f.mha_batch : 0.0), 8, true) << '\n';

    out << "\nIncremental tiers\n";
    out << pad("Configuration", 20) << pad("Capacity", 10, true) << pad("TTFT P99", 10, true)
        << pad("Tput", 9, true) << '\n';
    for (const auto& t : r.tiers)
        out << pad(t.configuration, 20) << pad(capacity_label(t.capacity), 10, true)
            << pad(fmt("%.2f s", t.ttft_p99_s), 10, true) << pad(fmt("%.0f", t.throughput), 9, true) << '\n';

    out << "\nEnd-to-end\n";
    out << pad("System", 20) << pad("TTFT P50", 10, true) << pad("TTFT P99", 10, true) << pad("TBT P99", 10, true)
        << pad("Tput", 9, true) << pad("$/Mtok", 9, true) << '\n';
    auto e2e = [&](const std::string& name, double p50, double p99, double tbt, double tput, double cost) {
        out << pad(name, 20) << pad(fmt("%.2f s", p50), 10, true) << pad(fmt("%.2f s", p99), 10, true)
            << pad(fmt("%.1f ms", tbt * 1e3), 10, true) << pad(fmt("%.0f", tput), 9, true)
            << pad(fmt("$%.2f", cost), 9, true) << '\n';
    };
    for (const auto& s : r.systems) e2e(s.system, s.ttft_p50_s, s.ttft_p99_s, s.tbt_p99_s, s.throughput, s.cost_per_mtok);
    e2e(r.ours.configuration, r.ours.ttft_p50_s, r.ours.ttft_p99_s, r.ours.tbt_p99_s, r.ours.throughput,
        r.ours.cost_per_mtok);

    if (!r.ablation_columns.empty()) {
        out << "\nAblation, throughput change\n" << pad("Component removed", 20);
        std::size_t width = 10;
        for (const auto& c : r.ablation_columns) width = std::max(width, c.size() + 2);
        for (const auto& c : r.ablation_columns) out << pad(c, width, true);
        out << '\n';
        for (const auto& [comp, deltas] : r.ablation) {
            out << pad(std::string(to_string(comp)), 20);
            for (double d : deltas) out << pad(fmt("%+.1f%%", d), width, true);
            out << '\n';
        }
    }
    return out.str();
}

}  // namespace kvtier
