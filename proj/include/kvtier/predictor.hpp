// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <shared_mutex>
#include <string>
#include <vector>

#include "kvtier/core.hpp"

namespace kvtier {

struct PredictorParams {
    double alpha0 = 1.0;
    double beta0 = 1.0;
    std::uint32_t window_size = 1000;
    /// Observation count at which confidence reaches 0.5.
    double confidence_halfpoint = 20.0;
};

void validate(const PredictorParams& params);

struct BetaCell {
    double alpha = 1.0;
    double beta = 1.0;
    std::uint64_t observation_count = 0;
};

/// Fixed-capacity ring of recent boolean outcomes with a running count of trues.
class OutcomeWindow {
public:
    explicit OutcomeWindow(std::uint32_t capacity = 1);

    void push(bool outcome);
    std::uint32_t size() const { return size_; }
    std::uint32_t capacity() const { return static_cast<std::uint32_t>(bits_.size()); }
    std::uint32_t positives() const { return positives_; }
    /// Oldest-first contents.
    std::vector<bool> contents() const;

private:
    std::vector<bool> bits_;
    std::uint32_t head_ = 0;
    std::uint32_t size_ = 0;
    std::uint32_t positives_ = 0;
};

/// Beta-Bernoulli reuse model over the 16 (block type, transition type) cells,
/// blended with a sliding-window empirical frequency by a confidence weight.
/// Not synchronized; see SharedPredictor.
class PredictorState {
public:
    explicit PredictorState(PredictorParams params = {});

    void observe(BlockType b, TransitionType t, bool reused);

    /// alpha / (alpha + beta).
    double posterior_mean(BlockType b, TransitionType t) const;
    /// n / (n + k0).
    double confidence(BlockType b, TransitionType t) const;
    /// Window frequency, or the posterior mean while the window is empty.
    double window_frequency(BlockType b, TransitionType t) const;
    /// c * posterior + (1 - c) * window frequency.
    double predict(BlockType b, TransitionType t) const;

    double predict(CellKey key) const { return predict(key.block, key.transition); }

    const BetaCell& cell(BlockType b, TransitionType t) const { return cells_[CellKey{b, t}.index()]; }
    const OutcomeWindow& window(BlockType b, TransitionType t) const {
        return windows_[CellKey{b, t}.index()];
    }
    const PredictorParams& params() const { return params_; }

    /// JSON document with params and all 16 cells (alpha, beta, count, window bits).
    std::string dump_json() const;
    static PredictorState load_json(const std::string& text);

private:
    PredictorParams params_;
    std::array<BetaCell, kNumCells> cells_;
    std::array<OutcomeWindow, kNumCells> windows_;
};

/// Reader-writer wrapper: concurrent predict/posterior_mean, exclusive observe.
class SharedPredictor {
public:
    explicit SharedPredictor(PredictorParams params = {}) : state_(params) {}

    void observe(BlockType b, TransitionType t, bool reused);
    double predict(BlockType b, TransitionType t) const;
    double posterior_mean(BlockType b, TransitionType t) const;
    /// Consistent (alpha, beta) pair for a cell.
    BetaCell cell(BlockType b, TransitionType t) const;
    PredictorState snapshot() const;

private:
    mutable std::shared_mutex mutex_;
    PredictorState state_;
};

}  // namespace kvtier
