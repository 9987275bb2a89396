// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvtier/predictor.hpp"

#include <mutex>
#include <stdexcept>

#include "json.hpp"

namespace kvtier {

void validate(const PredictorParams& params) {
    if (!(params.alpha0 > 0) || !(params.beta0 > 0))
        throw std::invalid_argument("predictor priors must be positive");
    if (params.window_size == 0) throw std::invalid_argument("window_size must be positive");
    if (!(params.confidence_halfpoint > 0))
        throw std::invalid_argument("confidence_halfpoint must be positive");
}

OutcomeWindow::OutcomeWindow(std::uint32_t capacity) : bits_(capacity, false) {
    if (capacity == 0) throw std::invalid_argument("window capacity must be positive");
}

void OutcomeWindow::push(bool outcome) {
    const auto cap = capacity();
    if (size_ == cap) {
        if (bits_[head_]) positives_--;
    } else {
        size_++;
    }
    bits_[head_] = outcome;
    if (outcome) positives_++;
    head_ = (head_ + 1) % cap;
}

std::vector<bool> OutcomeWindow::contents() const {
    std::vector<bool> out;
    out.reserve(size_);
    const auto cap = capacity();
    std::uint32_t start = (head_ + cap - size_) % cap;
    for (std::uint32_t i = 0; i < size_; ++i) out.push_back(bits_[(start + i) % cap]);
    return out;
}

PredictorState::PredictorState(PredictorParams params) : params_(params) {
    validate(params_);
    for (auto& c : cells_) c = {params_.alpha0, params_.beta0, 0};
    for (auto& w : windows_) w = OutcomeWindow(params_.window_size);
}

void PredictorState::observe(BlockType b, TransitionType t, bool reused) {
    const auto i = CellKey{b, t}.index();
    auto& c = cells_[i];
    if (reused)
        c.alpha += 1.0;
    else
        c.beta += 1.0;
    c.observation_count++;
    windows_[i].push(reused);
}

double PredictorState::posterior_mean(BlockType b, TransitionType t) const {
    const auto& c = cell(b, t);
    return c.alpha / (c.alpha + c.beta);
}

double PredictorState::confidence(BlockType b, TransitionType t) const {
    const double n = static_cast<double>(cell(b, t).observation_count);
    return n / (n + params_.confidence_halfpoint);
}

double PredictorState::window_frequency(BlockType b, TransitionType t) const {
    const auto& w = window(b, t);
    if (w.size() == 0) return posterior_mean(b, t);
    return static_cast<double>(w.positives()) / static_cast<double>(w.size());
}

double PredictorState::predict(BlockType b, TransitionType t) const {
    const double c = confidence(b, t);
    return c * posterior_mean(b, t) + (1.0 - c) * window_frequency(b, t);
}

std::string PredictorState::dump_json() const {
    nlohmann::ordered_json doc;
    doc["params"] = {{"alpha0", params_.alpha0},
                     {"beta0", params_.beta0},
                     {"window_size", params_.window_size},
                     {"confidence_halfpoint", params_.confidence_halfpoint}};
    auto cells = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < kNumCells; ++i) {
        const CellKey key = CellKey::from_index(i);
        const auto& c = cells_[i];
        std::string window;
        for (bool bit : windows_[i].contents()) window.push_back(bit ? '1' : '0');
        cells.push_back({{"block_type", to_string(key.block)},
                         {"transition_type", to_string(key.transition)},
                         {"alpha", c.alpha},
                         {"beta", c.beta},
                         {"observation_count", c.observation_count},
                         {"window", window}});
    }
    doc["cells"] = std::move(cells);
    return doc.dump(2) + "\n";
}

PredictorState PredictorState::load_json(const std::string& text) {
    const auto doc = nlohmann::json::parse(text);
    PredictorParams params;
    const auto& p = doc.at("params");
    params.alpha0 = p.at("alpha0").get<double>();
    params.beta0 = p.at("beta0").get<double>();
    params.window_size = p.at("window_size").get<std::uint32_t>();
    params.confidence_halfpoint = p.at("confidence_halfpoint").get<double>();
    PredictorState state(params);
    const auto& cells = doc.at("cells");
    if (cells.size() != kNumCells) throw std::invalid_argument("predictor dump must hold 16 cells");
    for (const auto& c : cells) {
        const CellKey key{parse_block_type(c.at("block_type").get<std::string>()),
                          parse_transition_type(c.at("transition_type").get<std::string>())};
        auto& cell = state.cells_[key.index()];
        cell.alpha = c.at("alpha").get<double>();
        cell.beta = c.at("beta").get<double>();
        cell.observation_count = c.at("observation_count").get<std::uint64_t>();
        for (char bit : c.at("window").get<std::string>()) state.windows_[key.index()].push(bit == '1');
    }
    return state;
}

void SharedPredictor::observe(BlockType b, TransitionType t, bool reused) {
    std::unique_lock lock(mutex_);
    state_.observe(b, t, reused);
}

double SharedPredictor::predict(BlockType b, TransitionType t) const {
    std::shared_lock lock(mutex_);
    return state_.predict(b, t);
}

double SharedPredictor::posterior_mean(BlockType b, TransitionType t) const {
    std::shared_lock lock(mutex_);
    return state_.posterior_mean(b, t);
}

BetaCell SharedPredictor::cell(BlockType b, TransitionType t) const {
    std::shared_lock lock(mutex_);
    return state_.cell(b, t);
}

PredictorState SharedPredictor::snapshot() const {
    std::shared_lock lock(mutex_);
    return state_;
}

}  // namespace kvtier
