#pragma once

#include <deque>

#include "conslearn/encoder.hpp"

namespace conslearn::ema {

struct EmaConfig {
    double zeta = 0.999;           ///< momentum, in [0, 1)
    std::size_t history_depth = 1;  ///< number of recent student snapshots averaged per step (1..3)
    bool enabled = true;           ///< false: the teacher mirrors the student

    void validate() const;
};

/// One momentum step with depth 1: teacher <- zeta * teacher + (1 - zeta) * student.
/// With enabled == false the teacher becomes a copy of the student.
void update(model::ModelState& state, const EmaConfig& cfg);

/// Momentum averaging over the last `history_depth` student snapshots:
/// teacher <- zeta * teacher + (1 - zeta) / k * (θ(t) + ... + θ(t-k+1)).
/// Snapshots that do not exist yet are padded with the initial student.
class TeacherAverager {
public:
    TeacherAverager(EmaConfig cfg, const model::ParamSet& initial_student);

    /// Call once per optimizer step, after the student has been updated.
    void update(model::ModelState& state);
    /// Keeps stored snapshots shape-compatible after the classifier is resized.
    void on_classifier_reset(const model::ModelState& state);

    [[nodiscard]] const EmaConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] std::size_t stored_snapshots() const noexcept { return history_.size(); }

private:
    EmaConfig cfg_;
    std::deque<model::ParamSet> history_;  ///< previous student snapshots, oldest first
};

}  // namespace conslearn::ema
