// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kvtier/config.hpp"
#include "kvtier/dedup.hpp"
#include "kvtier/metrics.hpp"
#include "kvtier/projection.hpp"
#include "kvtier/replay.hpp"
#include "kvtier/sizing.hpp"
#include "kvtier/trace.hpp"

namespace {

using namespace kvtier;
using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInvariant = 3;

void write_out(const std::string& path, const std::string& data) {
    if (path.empty() || path == "-") {
        std::cout << data;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << data;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string thousands(std::uint64_t v) {
    std::string s = std::to_string(v);
    for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
    return s;
}

std::vector<AccessEvent> load_or_generate(const RunConfig& cfg, const std::string& trace, const std::string& family,
                                          std::uint32_t sessions, std::uint64_t seed) {
    if (!trace.empty()) {
        auto events = parse(trace);
        validate_stream(events);
        return events;
    }
    WorkloadSpec spec = cfg.workload;
    if (!family.empty()) {
        spec = WorkloadSpec::defaults(parse_workload_family(family), spec.num_sessions, seed);
    }
    if (sessions) spec.num_sessions = sessions;
    spec.seed = seed;
    return generate(spec);
}

// --- size -------------------------------------------------------------------------

int cmd_size(const RunConfig& cfg, const std::string& format, std::uint64_t tokens, const std::string& out_path) {
    const auto fleet = fleet_report(cfg.models, cfg.budget);
    struct Row {
        const FleetRow* f;
        const ModelConfig* m;
        double seq_mha_gb;
        double seq_actual_gb;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < fleet.size(); ++i) {
        const ModelConfig& m = cfg.models[i];
        const double n = static_cast<double>(tokens) * m.num_layers;
        rows.push_back({&fleet[i], &m, fleet[i].mha_bytes_per_token_layer.to_double() * n / 1e9,
                        fleet[i].actual_bytes_per_token_layer.to_double() * n / 1e9});
    }
    std::ostringstream out;
    if (format == "json") {
        ordered_json j = ordered_json::array();
        for (const auto& r : rows) {
            const FleetRow& f = *r.f;
            j.push_back({{"model", f.name},
                         {"architecture", to_string(f.arch)},
                         {"mha_bytes_per_token_layer", f.mha_bytes_per_token_layer.to_double()},
                         {"actual_bytes_per_token_layer", f.actual_bytes_per_token_layer.to_double()},
                         {"ratio", f.ratio},
                         {"sequence_tokens", tokens},
                         {"sequence_mha_gb", r.seq_mha_gb},
                         {"sequence_actual_gb", r.seq_actual_gb},
                         {"mha_batch", f.mha_batch},
                         {"arch_batch", f.arch_batch}});
        }
        out << ordered_json{{"m_target_bytes", cfg.budget.m_target_bytes}, {"n_max", cfg.budget.n_max}, {"models", j}}
                   .dump(2)
            << '\n';
    } else if (format == "csv") {
        out << "model,architecture,mha_bytes_per_token_layer,actual_bytes_per_token_layer,ratio,sequence_tokens,"
               "sequence_mha_gb,sequence_actual_gb,mha_batch,arch_batch\n";
        for (const auto& r : rows) {
            const FleetRow& f = *r.f;
            out << f.name << ',' << to_string(f.arch) << ',' << f.mha_bytes_per_token_layer.to_double() << ','
                << f.actual_bytes_per_token_layer.to_double() << ',' << fmt("%.2f", f.ratio) << ',' << tokens << ','
                << fmt("%.2f", r.seq_mha_gb) << ',' << fmt("%.2f", r.seq_actual_gb) << ',' << f.mha_batch << ','
                << f.arch_batch << '\n';
        }
    } else if (format == "table") {
        char line[256];
        out << "KV bytes per token per layer\n";
        std::snprintf(line, sizeof line, "%-24s %12s %12s %8s %14s %14s\n", "Model", "MHA (bytes)", "Actual", "Ratio",
                      "Seq MHA (GB)", "Seq actual");
        out << line;
        for (const auto& r : rows) {
            const FleetRow& f = *r.f;
            const std::string name = f.name + " (" + std::string(to_string(f.arch)) + ")";
            auto bytes = [](const Rational& v) {
                return v.den() == 1 ? thousands(static_cast<std::uint64_t>(v.num())) : fmt("%.1f", v.to_double());
            };
            std::snprintf(line, sizeof line, "%-24s %12s %12s %7.0fx %14.1f %14.1f\n", name.c_str(),
                          bytes(f.mha_bytes_per_token_layer).c_str(), bytes(f.actual_bytes_per_token_layer).c_str(),
                          f.ratio, r.seq_mha_gb, r.seq_actual_gb);
            out << line;
        }
        out << "\nMaximum batch size (budget " << fmt("%.0f", cfg.budget.m_target_bytes / 1e9)
            << " GB, n_max " << cfg.budget.n_max << ")\n";
        std::snprintf(line, sizeof line, "%-24s %10s %12s %10s\n", "Model", "MHA batch", "Arch batch", "Gain");
        out << line;
        for (const auto& r : rows) {
            const FleetRow& f = *r.f;
            const double gain = f.mha_batch ? static_cast<double>(f.arch_batch) / f.mha_batch : 0.0;
            std::snprintf(line, sizeof line, "%-24s %10llu %12llu %9.1fx\n", f.name.c_str(),
                          static_cast<unsigned long long>(f.mha_batch), static_cast<unsigned long long>(f.arch_batch),
                          gain);
            out << line;
        }
    } else {
        throw CLI::ValidationError("--format", "must be table, csv or json");
    }
    write_out(out_path, out.str());
    return kExitOk;
}

// --- replay -----------------------------------------------------------------------

struct ReplayArgs {
    std::string trace;
    std::string family;
    std::uint32_t sessions = 0;
    std::string policy = "bayesian";
    std::optional<std::uint64_t> seed;
    std::string metrics_out;
    std::string prometheus_out;
    std::string agentic_dump;
    std::string workload;
    bool debug_invariants = false;
    bool prefetch = false;
    bool timing = false;
};

int cmd_replay(RunConfig cfg, const ReplayArgs& a) {
    if (a.trace.empty() == a.family.empty()) throw CLI::ValidationError("replay", "give exactly one of --trace or --family");
    const std::uint64_t seed = a.seed.value_or(cfg.seed);
    if (a.debug_invariants) cfg.replay.debug_invariants = true;
    if (a.prefetch) cfg.replay.prefetch.enabled = true;
    validate(cfg.replay);

    std::vector<PolicyKind> policies;
    if (a.policy == "all")
        policies.assign(kAllPolicies.begin(), kAllPolicies.end());
    else
        policies.push_back(parse_policy(a.policy));

    const auto events = load_or_generate(cfg, a.trace, a.family, a.sessions, seed);
    std::string label = a.workload;
    if (label.empty())
        label = a.trace.empty() ? a.family : std::filesystem::path(a.trace).stem().string();

    MetricsDocument doc;
    std::string chain;
    for (auto p : policies) {
        const auto t0 = std::chrono::steady_clock::now();
        auto art = replay_with_state(events, p, cfg.replay, seed);
        art.metrics.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "%s %s seed %llu: %llu accesses, tier 0+1 hit rate %.4f (%.2f s)\n", label.c_str(),
                     std::string(to_string(p)).c_str(), static_cast<unsigned long long>(seed),
                     static_cast<unsigned long long>(art.metrics.accesses), art.metrics.hit_rate_t01(),
                     art.metrics.wall_time_s);
        if (p == PolicyKind::Bayesian) chain = art.agentic_chain_json;
        doc.runs.push_back({label, art.metrics});
    }

    const std::string metrics_path = a.metrics_out.empty() ? cfg.output.metrics : a.metrics_out;
    const std::string prom_path = a.prometheus_out.empty() ? cfg.output.prometheus : a.prometheus_out;
    const std::string dump_path = a.agentic_dump.empty() ? cfg.output.agentic_dump : a.agentic_dump;
    const std::string json = metrics_to_json(doc, a.timing);
    if (metrics_path.empty())
        std::cout << json;
    else
        write_out(metrics_path, json);
    if (!prom_path.empty()) write_out(prom_path, prometheus_text(doc));
    if (!dump_path.empty()) {
        if (chain.empty()) throw CLI::ValidationError("--agentic-dump", "needs the bayesian policy");
        write_out(dump_path, chain);
    }
    return kExitOk;
}

// --- project ----------------------------------------------------------------------

int cmd_project(const RunConfig& cfg, const std::string& calibration, const std::string& format,
                const std::string& out_path, const std::string& fit_out) {
    if (!fit_out.empty()) write_out(fit_out, calibration_to_json(fit_calibration()));
    ReportSetup setup;
    setup.calibration = load_calibration(calibration.empty() ? cfg.calibration_path() : calibration);
    setup.fleet = cfg.models;
    setup.budget = cfg.budget;
    setup.systems = cfg.systems;
    for (const auto& name : cfg.ablation_models)
        setup.ablation_columns.push_back({name, calibrated_inputs(setup.calibration, find_model(cfg, name), cfg.budget)});
    const auto report = build_report(setup);
    write_out(out_path, format_report(report, parse_report_format(format)));
    return kExitOk;
}

// --- dedup-report -----------------------------------------------------------------

int cmd_dedup(const RunConfig& cfg, const std::string& trace, const std::string& family, std::uint32_t sessions,
              std::optional<std::uint64_t> seed, const std::vector<std::string>& models, const std::string& format,
              const std::string& out_path) {
    if (trace.empty() == family.empty()) throw CLI::ValidationError("dedup-report", "give exactly one of --trace or --family");
    const auto events = load_or_generate(cfg, trace, family, sessions, seed.value_or(cfg.seed));
    std::vector<DedupReport> rows;
    if (models.empty()) {
        for (const auto& m : cfg.models) rows.push_back(dedup_trace(events, m));
    } else {
        for (const auto& name : models) rows.push_back(dedup_trace(events, find_model(cfg, name)));
    }
    std::ostringstream out;
    if (format == "json") {
        ordered_json j = ordered_json::array();
        for (const auto& r : rows)
            j.push_back({{"model", r.model},
                         {"sessions", r.sessions},
                         {"tokens", r.tokens},
                         {"raw_bytes", r.raw_bytes},
                         {"deduped_bytes", r.deduped_bytes},
                         {"distinct_contents", r.distinct_contents},
                         {"raw_mb_per_1k_tokens", r.raw_mb_per_1k_tokens()},
                         {"deduped_mb_per_1k_tokens", r.deduped_mb_per_1k_tokens()},
                         {"savings", r.savings}});
        out << j.dump(2) << '\n';
    } else if (format == "csv") {
        out << "model,raw_mb_per_1k_tokens,deduped_mb_per_1k_tokens,savings,raw_bytes,deduped_bytes,sessions\n";
        for (const auto& r : rows)
            out << r.model << ',' << fmt("%.2f", r.raw_mb_per_1k_tokens()) << ','
                << fmt("%.2f", r.deduped_mb_per_1k_tokens()) << ',' << fmt("%.4f", r.savings) << ',' << r.raw_bytes
                << ',' << r.deduped_bytes << ',' << r.sessions << '\n';
    } else if (format == "table") {
        char line[160];
        out << "Checkpoint size per 1,000 tokens of cached state\n";
        std::snprintf(line, sizeof line, "%-18s %12s %12s %9s\n", "Model", "Raw ckpt", "Deduped", "Savings");
        out << line;
        for (const auto& r : rows) {
            std::snprintf(line, sizeof line, "%-18s %9.2f MB %9.2f MB %8.1f%%\n", r.model.c_str(),
                          r.raw_mb_per_1k_tokens(), r.deduped_mb_per_1k_tokens(), 100.0 * r.savings);
            out << line;
        }
    } else {
        throw CLI::ValidationError("--format", "must be table, csv or json");
    }
    write_out(out_path, out.str());
    return kExitOk;
}

// --- report -----------------------------------------------------------------------

int cmd_report(const std::vector<std::string>& files, const std::string& format, const std::string& out_path) {
    std::vector<std::pair<std::string, MetricsDocument>> docs;
    for (const auto& f : files) docs.emplace_back(f, read_metrics_file(f));
    const auto merged = merge_metrics(docs);
    write_out(out_path, format_comparison(compare_runs(merged), parse_table_format(format)));
    return kExitOk;
}

int run(int argc, char** argv) {
    CLI::App app{"Multi-tier KV-cache sizing, trace replay and projection toolkit", "kvtier"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    std::string config_path = "defaults";
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Run config JSON, or 'defaults'");
    };

    auto* size = app.add_subcommand("size", "Per-token KV sizing and maximum batch sizes");
    add_config(size);
    std::string size_format = "table", size_out;
    std::uint64_t size_tokens = 128'000;
    size->add_option("--format", size_format, "table, csv or json");
    size->add_option("--tokens", size_tokens, "Sequence length for the whole-sequence totals");
    size->add_option("--out", size_out, "Output file (stdout when empty)");

    auto* gen = app.add_subcommand("gen-trace", "Generate a synthetic JSONL trace");
    add_config(gen);
    std::string gen_family, gen_out;
    std::uint32_t gen_sessions = 0;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--family", gen_family, "sharegpt, lmsys or agentic (default: config workload)");
    gen->add_option("--sessions", gen_sessions, "Session count (0 keeps the config value)");
    gen->add_option("--seed", gen_seed, "Generator seed (default: config run.seed)");
    gen->add_option("--out", gen_out, "Output file (stdout when empty)");

    auto* rep = app.add_subcommand("replay", "Replay a trace under a cache policy");
    add_config(rep);
    ReplayArgs ra;
    rep->add_option("--trace", ra.trace, "JSONL trace file");
    rep->add_option("--family", ra.family, "Generate the trace instead: sharegpt, lmsys or agentic");
    rep->add_option("--sessions", ra.sessions, "Sessions when generating (0 keeps the config value)");
    rep->add_option("--policy", ra.policy, "lru, ema, bayesian or all");
    rep->add_option("--seed", ra.seed, "Run seed, also the generator seed with --family (default: config run.seed)");
    rep->add_option("--metrics-out", ra.metrics_out, "Metrics JSON file (stdout when empty)");
    rep->add_option("--prometheus-out", ra.prometheus_out, "Prometheus text file");
    rep->add_option("--agentic-dump", ra.agentic_dump, "Tool transition chain JSON (bayesian policy)");
    rep->add_option("--workload", ra.workload, "Workload label in the metrics (default: trace stem or family)");
    rep->add_flag("--debug-invariants", ra.debug_invariants, "Check tier invariants after every event");
    rep->add_flag("--prefetch", ra.prefetch, "Enable positional prefetch");
    rep->add_flag("--timing", ra.timing, "Include wall time in the metrics JSON");

    auto* proj = app.add_subcommand("project", "Analytical TTFT, throughput, cost and ablation projections");
    add_config(proj);
    std::string calibration, proj_format = "table", proj_out, fit_out;
    proj->add_option("--calibration", calibration, "Calibration JSON (default: config projection.calibration)");
    proj->add_option("--format", proj_format, "table, csv or json");
    proj->add_option("--out", proj_out, "Output file (stdout when empty)");
    proj->add_option("--fit-out", fit_out, "Also write a freshly fitted calibration here");

    auto* dd = app.add_subcommand("dedup-report", "Checkpoint deduplication savings per model");
    add_config(dd);
    std::string dd_trace, dd_family, dd_format = "table", dd_out;
    std::uint32_t dd_sessions = 0;
    std::optional<std::uint64_t> dd_seed;
    std::vector<std::string> dd_models;
    dd->add_option("--trace", dd_trace, "JSONL trace file");
    dd->add_option("--family", dd_family, "Generate the trace instead: sharegpt, lmsys or agentic");
    dd->add_option("--sessions", dd_sessions, "Sessions when generating (0 keeps the config value)");
    dd->add_option("--seed", dd_seed, "Generator seed (default: config run.seed)");
    dd->add_option("--models", dd_models, "Model names (default: config sizing.models)");
    dd->add_option("--format", dd_format, "table, csv or json");
    dd->add_option("--out", dd_out, "Output file (stdout when empty)");

    auto* report = app.add_subcommand("report", "Merge metrics files into a policy comparison");
    std::vector<std::string> report_files;
    std::string report_format = "text", report_out;
    report->add_option("files", report_files, "Metrics JSON files")->required();
    report->add_option("--format", report_format, "text, csv or json");
    report->add_option("--out", report_out, "Output file (stdout when empty)");

    auto* defaults = app.add_subcommand("print-config", "Print the effective run config");
    add_config(defaults);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (report->parsed()) return cmd_report(report_files, report_format, report_out);
        const RunConfig cfg = load_run_config(config_path, process_environment());
        if (defaults->parsed()) {
            std::cout << run_config_to_json(cfg);
            return kExitOk;
        }
        if (size->parsed()) return cmd_size(cfg, size_format, size_tokens, size_out);
        if (gen->parsed()) {
            WorkloadSpec spec = cfg.workload;
            const std::uint64_t seed = gen_seed.value_or(cfg.seed);
            if (!gen_family.empty()) spec = WorkloadSpec::defaults(parse_workload_family(gen_family), spec.num_sessions);
            if (gen_sessions) spec.num_sessions = gen_sessions;
            spec.seed = seed;
            const auto events = generate(spec);
            if (gen_out.empty() || gen_out == "-")
                emit(events, std::cout);
            else
                emit(events, gen_out);
            return kExitOk;
        }
        if (rep->parsed()) return cmd_replay(cfg, ra);
        if (proj->parsed()) return cmd_project(cfg, calibration, proj_format, proj_out, fit_out);
        if (dd->parsed()) return cmd_dedup(cfg, dd_trace, dd_family, dd_sessions, dd_seed, dd_models, dd_format, dd_out);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const TraceParseError& e) {
        std::cerr << "trace error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const SchemaMismatch& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::domain_error& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::out_of_range& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::logic_error& e) {
        std::cerr << "invariant violation: " << e.what() << '\n';
        return kExitInvariant;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
