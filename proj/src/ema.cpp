#include "conslearn/ema.hpp"

#include <string>

namespace conslearn::ema {

void EmaConfig::validate() const {
    if (!(zeta >= 0.0 && zeta < 1.0)) throw ConfigError("ema.zeta must lie in [0,1), got " + std::to_string(zeta));
    if (history_depth < 1 || history_depth > 3) {
        throw ConfigError("ema.depth must be 1, 2 or 3, got " + std::to_string(history_depth));
    }
}

void update(model::ModelState& state, const EmaConfig& cfg) {
    cfg.validate();
    if (!state.student.same_shapes(state.teacher)) throw ContractError("ema: teacher and student layouts differ");
    if (!cfg.enabled) {
        state.teacher = state.student;
        return;
    }
    const double keep = cfg.zeta, take = 1.0 - cfg.zeta;
    for (std::size_t p = 0; p < state.teacher.values.size(); ++p) {
        double* t = state.teacher.values[p].data();
        const double* s = state.student.values[p].data();
        for (std::size_t i = 0; i < state.teacher.values[p].size(); ++i) {
            // exact fixed point: keep + take need not round to 1
            if (t[i] != s[i]) t[i] = keep * t[i] + take * s[i];
        }
    }
}

TeacherAverager::TeacherAverager(EmaConfig cfg, const model::ParamSet& initial_student) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.enabled) history_.assign(cfg_.history_depth - 1, initial_student);
}

void TeacherAverager::update(model::ModelState& state) {
    if (!cfg_.enabled || cfg_.history_depth == 1) {
        ema::update(state, cfg_);
        return;
    }
    const double keep = cfg_.zeta;
    const double take = (1.0 - cfg_.zeta) / static_cast<double>(cfg_.history_depth);
    for (std::size_t p = 0; p < state.teacher.values.size(); ++p) {
        double* t = state.teacher.values[p].data();
        const double* s = state.student.values[p].data();
        for (std::size_t i = 0; i < state.teacher.values[p].size(); ++i) {
            double recent = s[i];
            bool settled = t[i] == s[i];
            for (const auto& snap : history_) {
                recent += snap.values[p][i];
                settled = settled && snap.values[p][i] == s[i];
            }
            if (!settled) t[i] = keep * t[i] + take * recent;
        }
    }
    history_.push_back(state.student);
    history_.pop_front();
}

void TeacherAverager::on_classifier_reset(const model::ModelState& state) {
    for (auto& snap : history_) {
        snap.get("cls.weight") = state.student.get("cls.weight");
        snap.get("cls.bias") = state.student.get("cls.bias");
    }
}

}  // namespace conslearn::ema
