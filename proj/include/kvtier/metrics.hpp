// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvtier/replay.hpp"

namespace kvtier {

inline constexpr int kMetricsSchemaVersion = 1;

/// One replay run with the workload label it belongs to.
struct RunRecord {
    std::string workload;
    ReplayMetrics metrics;
};

struct MetricsDocument {
    int schema_version = kMetricsSchemaVersion;
    std::vector<RunRecord> runs;
};

class SchemaMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Wall time is left out unless asked for, so equal inputs give equal bytes.
std::string metrics_to_json(const MetricsDocument& doc, bool include_wall_time = false);
/// Throws ConfigError on malformed documents.
MetricsDocument metrics_from_json(const std::string& text, const std::string& origin = "metrics");
MetricsDocument read_metrics_file(const std::string& path);

/// Prometheus text exposition (version 0.0.4) with policy/seed/workload labels.
std::string prometheus_text(const MetricsDocument& doc);

/// Concatenates runs; throws SchemaMismatch naming both versions and their sources.
MetricsDocument merge_metrics(const std::vector<std::pair<std::string, MetricsDocument>>& sources);

struct ComparisonRow {
    std::string workload;
    std::map<PolicyKind, PolicySummary> policies;
};

/// Rows in first-seen workload order.
std::vector<ComparisonRow> compare_runs(const MetricsDocument& doc);

enum class TableFormat : std::uint8_t { text, csv, json };
TableFormat parse_table_format(std::string_view s);

/// Workload rows against LRU / EMA / Bayesian mean +- stdev columns, plus the
/// Bayesian minus LRU gap in percentage points.
std::string format_comparison(const std::vector<ComparisonRow>& rows, TableFormat format);

}  // namespace kvtier
