#pragma once

// Minimal reverse-mode differentiation over dense arrays.
//
// A Tape records every primitive executed on Vars in order. backward() sweeps
// the record in exact reverse order and accumulates gradients into every entry
// that requires one. Entries created from constants never receive gradients,
// and an op whose inputs are all constant records no backward step.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <deque>
#include <vector>

#include "conslearn/array.hpp"

namespace conslearn::diff {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    [[nodiscard]] const Array& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
    [[nodiscard]] bool requires_grad() const;
};

enum class Padding { same, valid };

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Gradient-free input.
    Var constant(Array value);
    /// Differentiable leaf (a parameter or an input under test).
    Var leaf(Array value);

    [[nodiscard]] const Array& value(Var v) const { return entries_.at(v.id).value; }
    [[nodiscard]] bool requires_grad(Var v) const { return entries_.at(v.id).requires_grad; }

    /// Gradient accumulated by the last backward(); zeros if the entry was never reached.
    [[nodiscard]] Array grad(Var v) const;

    /// Reverse sweep from a scalar loss. Throws ContractError for non-scalar losses.
    void backward(Var loss);

    /// Names of executed ops, in execution order.
    [[nodiscard]] std::vector<std::string> op_names() const;
    /// Ids visited by the most recent backward sweep, in visiting order.
    [[nodiscard]] const std::vector<std::size_t>& last_sweep() const noexcept { return last_sweep_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

    using Backprop = std::function<void(Tape&, const Array& out_grad, const Array& out_value)>;

    /// Records an op result. `backprop` receives the upstream gradient and the
    /// op's own output, and pushes gradients to inputs via accumulate().
    Var record(const char* op, Array value, bool requires_grad, Backprop backprop);

    /// Adds `g` into the gradient buffer of `v` (no-op for constants).
    void accumulate(Var v, const Array& g);
    /// Direct access to a gradient buffer for ops that scatter into it.
    Array* grad_buffer(Var v);

private:
    struct Entry {
        Array value;
        Array grad;
        bool requires_grad = false;
        bool has_grad = false;
        const char* op = "";
        Backprop backprop;
    };
    std::deque<Entry> entries_;
    std::vector<std::size_t> last_sweep_;
};

// ---- primitives -----------------------------------------------------------

/// input[N×D] · weight[D×E] + bias[E].
Var linear(Var input, Var weight, Var bias);
/// Cross-correlation of input[N×C×H×W] with kernel[K×C×kh×kw].
Var conv2d(Var input, Var kernel, std::size_t stride, Padding padding);
/// Adds bias[K] to every spatial position of channel k of input[N×K×H×W].
Var add_channel_bias(Var input, Var bias);
Var relu(Var input);
/// Spatial mean: [N×C×H×W] -> [N×C].
Var global_avg_pool(Var input);
/// Row-wise softmax with max subtraction: [N×Ω] -> [N×Ω].
Var softmax(Var input);
/// Multiplies input[N×C×H×W] by a per-image mask[N×H×W] broadcast over channels.
Var mask_multiply(Var input, const Array& mask);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Sum of all elements, as a scalar.
Var sum(Var a);

/// mean_i Σ_l -target[i,l]·log(max(probs[i,l], floor)); target is a constant.
Var soft_cross_entropy(const Array& target, Var probs, double floor = 1e-12);
/// Σ over rows with label >= 0 of -log(max(probs[i,label_i], floor)), divided by
/// the number of such rows. Rows with negative label are ignored. A batch with no
/// labelled row yields 0.
Var nll_of_probs(Var probs, std::span<const int> labels, double floor = 1e-12);
/// Euclidean distances ||x[a] - x[b]|| for each index pair; subgradient 0 at 0.
Var pair_distances(Var x, std::span<const std::pair<std::size_t, std::size_t>> pairs);
/// Elementwise log(1 + exp(x)), computed stably.
Var softplus(Var x);
/// Mean of all elements, as a scalar; an empty input yields 0.
Var mean(Var a);

}  // namespace conslearn::diff
