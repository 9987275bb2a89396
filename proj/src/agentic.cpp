// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/agentic.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

#include "json.hpp"

namespace kvtier {

ToolChain::ToolChain(double smoothing) : k_(smoothing) {
    if (!(smoothing >= 0.0)) throw std::invalid_argument("smoothing must be non-negative");
}

std::size_t ToolChain::intern(std::string_view tool) {
    if (auto it = ids_.find(std::string(tool)); it != ids_.end()) return it->second;
    const std::size_t id = names_.size();
    names_.emplace_back(tool);
    ids_.emplace(names_.back(), id);
    for (auto& row : counts_) row.push_back(0);
    counts_.emplace_back(names_.size(), 0);
    row_totals_.push_back(0);
    return id;
}

std::optional<std::size_t> ToolChain::find(std::string_view tool) const {
    auto it = ids_.find(std::string(tool));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

void ToolChain::observe_transition(std::string_view from, std::string_view to) {
    const std::size_t i = intern(from);
    const std::size_t j = intern(to);
    counts_[i][j]++;
    row_totals_[i]++;
}

std::uint64_t ToolChain::count(std::string_view from, std::string_view to) const {
    auto i = find(from), j = find(to);
    if (!i || !j) return 0;
    return counts_[*i][*j];
}

double ToolChain::probability(std::string_view from, std::string_view to) const {
    const auto j = find(to);
    if (!j) return 0.0;
    const double n = static_cast<double>(names_.size());
    const auto i = find(from);
    if (!i) return 1.0 / n;
    const double mass = static_cast<double>(row_totals_[*i]) + n * k_;
    if (mass == 0.0) return 1.0 / n;
    return (static_cast<double>(counts_[*i][*j]) + k_) / mass;
}

std::vector<std::pair<std::string, double>> ToolChain::predict_next(std::string_view current) const {
    std::vector<std::pair<std::string, double>> out;
    out.reserve(names_.size());
    for (const auto& name : names_) out.emplace_back(name, probability(current, name));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return out;
}

std::string ToolChain::dump_json() const {
    nlohmann::ordered_json doc;
    doc["smoothing"] = k_;
    std::vector<std::string> sorted = names_;
    std::sort(sorted.begin(), sorted.end());
    doc["tools"] = sorted;
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (const auto& from : sorted) {
        nlohmann::ordered_json row = nlohmann::ordered_json::object();
        for (const auto& to : sorted) {
            if (auto c = count(from, to)) row[to] = c;
        }
        counts[from] = std::move(row);
    }
    doc["counts"] = std::move(counts);
    return doc.dump(2) + "\n";
}

double ToolMemoryProfile::stddev() const { return std::sqrt(std::max(0.0, variance)); }

MemoryProfiles::MemoryProfiles(double decay) : decay_(decay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("memory decay must lie in [0, 1)");
}

void MemoryProfiles::step(ToolMemoryProfile& p, double x, double decay) {
    if (p.observations == 0) {
        p.mean = x;
        p.variance = 0.0;
        p.peak = x;
    } else {
        const double delta = x - p.mean;
        p.mean += (1.0 - decay) * delta;
        p.variance = decay * (p.variance + (1.0 - decay) * delta * delta);
        p.peak = std::max({p.peak, x, p.mean});
    }
    p.observations++;
}

void MemoryProfiles::update(std::string_view tool, double observed_bytes) {
    if (!(observed_bytes >= 0.0)) throw std::invalid_argument("observed bytes must be non-negative");
    auto it = profiles_.find(tool);
    if (it == profiles_.end()) it = profiles_.emplace(std::string(tool), ToolMemoryProfile{}).first;
    step(it->second, observed_bytes, decay_);
    step(global_, observed_bytes, decay_);
}

std::optional<ToolMemoryProfile> MemoryProfiles::profile(std::string_view tool) const {
    auto it = profiles_.find(tool);
    if (it == profiles_.end()) return std::nullopt;
    return it->second;
}

MemoryProfiles::Prediction MemoryProfiles::predict_memory(std::string_view tool) const {
    const auto p = profile(tool);
    const ToolMemoryProfile& src = p ? *p : global_;
    return {src.mean, src.peak};
}

std::string_view to_string(SessionClass c) {
    switch (c) {
        case SessionClass::Light: return "Light";
        case SessionClass::Medium: return "Medium";
        case SessionClass::Heavy: return "Heavy";
        case SessionClass::Extreme: return "Extreme";
    }
    return "?";
}

SessionClass classify_session(double aggregate_peak_bytes, const ClassThresholds& t) {
    if (!(t[0] < t[1] && t[1] < t[2])) throw std::invalid_argument("class thresholds must be strictly increasing");
    if (aggregate_peak_bytes < t[0]) return SessionClass::Light;
    if (aggregate_peak_bytes < t[1]) return SessionClass::Medium;
    if (aggregate_peak_bytes < t[2]) return SessionClass::Heavy;
    return SessionClass::Extreme;
}

PreparationPlan on_tool_switch(const ToolChain& chain, const MemoryProfiles& profiles,
                               const AccessEvent& event, const std::optional<std::string>& previous_tool) {
    if (event.kind != EventKind::tool_call || !event.tool_name)
        throw std::invalid_argument("on_tool_switch needs a tool_call event with a tool name");
    PreparationPlan plan;
    plan.tool = *event.tool_name;
    plan.prefetch_tool = plan.tool;
    plan.prefetch_block_types = {BlockType::tool_context};
    plan.predicted_next = chain.predict_next(plan.tool);
    if (previous_tool && *previous_tool == plan.tool) {
        plan.transition_type = TransitionType::same_tool_repeat;
        plan.reserve_bytes = 0.0;
        return plan;
    }
    plan.transition_type = TransitionType::tool_switch;
    const auto p = profiles.profile(plan.tool);
    const ToolMemoryProfile& src = p ? *p : profiles.global();
    plan.reserve_bytes = src.mean + src.stddev();
    return plan;
}

AgenticPredictor::AgenticPredictor(double smoothing, double memory_decay, ClassThresholds thresholds)
    : chain_(smoothing), profiles_(memory_decay), thresholds_(thresholds) {
    classify_session(0.0, thresholds_);
}

PreparationPlan AgenticPredictor::observe_tool_call(const AccessEvent& event) {
    std::unique_lock lock(mutex_);
    std::optional<std::string> prev;
    if (auto it = last_tool_.find(event.session_id); it != last_tool_.end()) prev = it->second;
    PreparationPlan plan = on_tool_switch(chain_, profiles_, event, prev);
    if (prev)
        chain_.observe_transition(*prev, plan.tool);
    else
        chain_.intern(plan.tool);
    last_tool_[event.session_id] = plan.tool;
    return plan;
}

void AgenticPredictor::observe_tool_memory(std::string_view tool, double bytes) {
    std::unique_lock lock(mutex_);
    profiles_.update(tool, bytes);
}

SessionClass AgenticPredictor::observe_session_bytes(const std::string& session_id, double bytes) {
    std::unique_lock lock(mutex_);
    double& peak = session_peak_[session_id];
    peak = std::max(peak, bytes);
    return classify_session(peak, thresholds_);
}

void AgenticPredictor::end_session(const std::string& session_id) {
    std::unique_lock lock(mutex_);
    last_tool_.erase(session_id);
    session_peak_.erase(session_id);
}

std::optional<std::string> AgenticPredictor::last_tool(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    auto it = last_tool_.find(session_id);
    if (it == last_tool_.end()) return std::nullopt;
    return it->second;
}

std::string AgenticPredictor::dump_json() const {
    std::shared_lock lock(mutex_);
    return chain_.dump_json();
}

}  // namespace kvtier
