#pragma once

#include <vector>

#include "conslearn/encoder.hpp"

namespace conslearn::optim {

struct AdamConfig {
    double learning_rate = 3.5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 5e-4;  ///< added to the gradient as wd * theta

    void validate() const;
};

/// Adam with bias correction and L2 weight decay folded into the gradient.
/// Moment buffers are kept per parameter and persist across steps.
class Adam {
public:
    explicit Adam(AdamConfig cfg);

    /// One step over every parameter of `params`; grads[i] pairs with params.values[i].
    /// A non-finite gradient throws before anything is modified.
    void step(model::ParamSet& params, const std::vector<Array>& grads);

    /// Drops moment state of the classifier after it has been re-initialised.
    void reset_classifier(const model::ParamSet& params);

    [[nodiscard]] const AdamConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] std::size_t steps() const noexcept { return steps_; }

private:
    AdamConfig cfg_;
    std::vector<Array> m_, v_;
    std::vector<std::size_t> t_;  ///< per-parameter step count, for bias correction
    std::size_t steps_ = 0;
};

}  // namespace conslearn::optim
