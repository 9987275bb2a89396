// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kvtier/projection.hpp"
#include "kvtier/replay.hpp"
#include "kvtier/sizing.hpp"
#include "kvtier/trace.hpp"

namespace kvtier {

struct OutputPaths {
    std::string metrics;
    std::string prometheus;
    std::string agentic_dump;
};

/// Everything a subcommand needs. Sections in the JSON form: run, sizing,
/// hierarchy, replay, predictor, eviction, prefetch, value, workload,
/// projection, output.
struct RunConfig {
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<ModelConfig> models = reference_models();
    SizingBudget budget = reference_budget();
    ReplayConfig replay;
    WorkloadSpec workload = WorkloadSpec::defaults(WorkloadFamily::lmsys_like);
    /// Relative paths resolve against the config file's directory.
    std::string calibration = "calibration.json";
    std::vector<SystemRow> systems;
    std::vector<std::string> ablation_models = {"DeepSeek-V3", "Llama-3-70B"};
    OutputPaths output;
    /// Directory of the file the config came from; empty for built-in defaults.
    std::string base_dir;

    std::string calibration_path() const;
};

RunConfig default_run_config();

using Environment = std::map<std::string, std::string>;

/// KVTIER_* variables of the running process.
Environment process_environment();

/// Parses a JSON document over the defaults. Missing keys keep their default,
/// unknown keys are errors naming their location, and KVTIER_<SECTION>_<KEY>
/// entries in `env` override the document. Throws ConfigError.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "config",
                           const Environment& env = {});

/// Reads a file, or the built-in defaults when `path` is empty or "defaults".
RunConfig load_run_config(const std::string& path, const Environment& env = {});

/// Full document with every key present; parse_run_config inverts it.
std::string run_config_to_json(const RunConfig& cfg);

/// Model by name from cfg.models, then the reference set. Throws ConfigError.
ModelConfig find_model(const RunConfig& cfg, const std::string& name);

}  // namespace kvtier
