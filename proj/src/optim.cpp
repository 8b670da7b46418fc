#include "conslearn/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace conslearn::optim {

void AdamConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("train.lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0,1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
}

Adam::Adam(AdamConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Adam::step(model::ParamSet& params, const std::vector<Array>& grads) {
    if (grads.size() != params.values.size()) {
        throw ContractError("adam: " + std::to_string(grads.size()) + " gradients for " +
                            std::to_string(params.values.size()) + " parameters");
    }
    for (std::size_t p = 0; p < grads.size(); ++p) {
        if (grads[p].shape() != params.values[p].shape()) {
            throw DimensionError("adam: gradient of " + params.names[p] + " has shape " +
                                 shape_to_string(grads[p].shape()));
        }
        if (!grads[p].all_finite()) throw std::runtime_error("non-finite gradient in parameter " + params.names[p]);
    }
    if (m_.size() != params.values.size()) {
        m_.clear();
        v_.clear();
        for (const auto& v : params.values) {
            m_.emplace_back(v.shape(), 0.0);
            v_.emplace_back(v.shape(), 0.0);
        }
        t_.assign(params.values.size(), 0);
    }
    for (std::size_t p = 0; p < grads.size(); ++p) {
        const auto t = static_cast<double>(++t_[p]);
        const double c1 = 1.0 - std::pow(cfg_.beta1, t), c2 = 1.0 - std::pow(cfg_.beta2, t);
        double* theta = params.values[p].data();
        double* m = m_[p].data();
        double* v = v_[p].data();
        const double* g = grads[p].data();
        for (std::size_t i = 0; i < grads[p].size(); ++i) {
            const double gi = g[i] + cfg_.weight_decay * theta[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            theta[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
        }
    }
    ++steps_;
}

void Adam::reset_classifier(const model::ParamSet& params) {
    if (m_.size() != params.values.size()) return;
    for (std::size_t p = 0; p < params.values.size(); ++p) {
        if (!model::is_classifier_param(params.names[p])) continue;
        m_[p] = Array(params.values[p].shape(), 0.0);
        v_[p] = Array(params.values[p].shape(), 0.0);
        t_[p] = 0;
    }
}

}  // namespace conslearn::optim
