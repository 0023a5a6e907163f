#pragma once

// Fully-connected ReLU networks with identity output, evaluated on row
// batches, plus reverse-mode gradients and an Adam optimizer. Shared by the
// flow subnets and the toy models.

#include "luq/linalg.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace luq {

struct Mlp {
    std::vector<std::size_t> layer_dims;  // input, hidden..., output
    std::vector<Matrix> weights;          // weights[l] is dims[l] × dims[l+1]
    std::vector<Vector> biases;

    Mlp() = default;
    // Zero-valued parameters for the given layer sizes (at least input and output).
    explicit Mlp(std::vector<std::size_t> dims);

    std::size_t depth() const noexcept { return weights.size(); }
    std::size_t input_dim() const noexcept { return layer_dims.front(); }
    std::size_t output_dim() const noexcept { return layer_dims.back(); }
    std::size_t parameter_count() const noexcept;

    // Views into every weight and bias array, in a fixed order.
    std::vector<std::span<double>> parameter_blocks();
    std::vector<std::span<const double>> parameter_blocks() const;

    bool operator==(const Mlp&) const = default;
};

// activations[0] is the input batch; activations[l] for 0 < l < depth is the
// post-ReLU output of hidden layer l; activations[depth] is the output.
struct MlpTape {
    std::vector<Matrix> activations;
};

Matrix mlp_forward(const Mlp& net, const Matrix& input, MlpTape* tape = nullptr);
Vector mlp_forward(const Mlp& net, std::span<const double> input);

// Accumulates parameter gradients into `grads` (same shape as `net`) and
// returns the gradient with respect to the input batch.
Matrix mlp_backward(const Mlp& net, const MlpTape& tape, const Matrix& grad_output, Mlp& grads);

// Glorot-uniform weights, zero biases. With zero_last the final layer's
// weights are zero as well.
void init_glorot_uniform(Mlp& net, std::mt19937_64& rng, bool zero_last = false);

void set_zero(Mlp& net);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // decoupled
};

class Adam {
public:
    Adam(AdamConfig cfg, std::span<const std::span<double>> params);

    // params and grads must list blocks in the same order and sizes as at construction.
    void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

    std::uint64_t steps() const noexcept { return t_; }

private:
    AdamConfig cfg_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t t_ = 0;
};

// Helpers for treating several networks as one parameter set.
void append_blocks(std::vector<std::span<double>>& out, Mlp& net);
void append_blocks(std::vector<std::span<const double>>& out, const Mlp& net);

}  // namespace luq
