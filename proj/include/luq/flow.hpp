#pragma once

// Conditional normalizing flow built from affine coupling layers.
//
// Each layer copies one index partition u1 and maps the other as
//   u2' = (u2 + t(u1; c)) ⊙ exp(s̃),   s̃ = α·tanh(s(u1; c) / α)
// where the conditioning input c passes through its own MLP whose output is
// appended to u1 before entering the scale and translation subnets (a
// learned linear lift added to their first hidden layer). The Jacobian is
// triangular with log-determinant Σ s̃. A fixed per-dimension standardization
// precedes the first layer; the base distribution is a standard normal.

#include "luq/linalg.hpp"
#include "luq/nn.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace luq {

struct CouplingLayer {
    std::size_t dim = 0;
    std::vector<std::size_t> part1;  // copied unchanged
    std::vector<std::size_t> part2;  // affinely transformed
    Mlp scale_net;                   // [|part1| + embed, hidden..., |part2|]
    Mlp translate_net;               // same shape as scale_net
    Mlp cond_net;                    // [cond_dim, hidden, embed]
    double scale_clamp = 2.0;

    bool operator==(const CouplingLayer&) const = default;
};

struct ConditionalFlow {
    std::size_t dim = 0;
    std::size_t cond_dim = 0;
    Vector input_shift;  // z ↦ (z - shift) / scale before the first layer
    Vector input_scale;
    std::vector<CouplingLayer> layers;

    bool operator==(const ConditionalFlow&) const = default;
};

struct FlowArchitecture {
    std::size_t dim = 1;
    std::size_t cond_dim = 1;
    std::size_t n_layers = 3;
    std::size_t hidden_width = 64;
    std::size_t hidden_layers = 2;
    std::size_t cond_hidden = 32;
    std::size_t cond_embed = 16;
    double scale_clamp = 2.0;
};

// Even/odd split alternating with layer parity. For dim 1 the single
// coordinate is transformed by every layer and the subnets see only the
// conditioning embedding.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> coupling_partition(std::size_t dim,
                                                                                  std::size_t layer_index);

// Glorot-uniform hidden layers; final subnet layers zero so the flow starts
// as the identity map.
ConditionalFlow make_flow(const FlowArchitecture& arch, std::uint64_t seed);

std::vector<std::span<double>> parameter_blocks(ConditionalFlow& f);
std::vector<std::span<const double>> parameter_blocks(const ConditionalFlow& f);
void set_zero(ConditionalFlow& f);

struct CouplingResult {
    Vector u;
    double log_det = 0.0;
};

CouplingResult coupling_forward(const CouplingLayer& layer, std::span<const double> u_in,
                                std::span<const double> c);
CouplingResult coupling_inverse(const CouplingLayer& layer, std::span<const double> u_out,
                                std::span<const double> c);

// Full map z ↦ base coordinates; log_det includes the standardization.
CouplingResult flow_forward(const ConditionalFlow& f, std::span<const double> z, std::span<const double> c);
CouplingResult flow_inverse(const ConditionalFlow& f, std::span<const double> x, std::span<const double> c);

double flow_log_prob(const ConditionalFlow& f, std::span<const double> z, std::span<const double> c);
// Row-wise log-density of a batch.
Vector flow_log_prob(const ConditionalFlow& f, const Matrix& z, const Matrix& c);

struct CouplingTape {
    Matrix u_in;
    Matrix s_raw;
    Matrix s_tilde;
    Matrix shifted;  // u2 + t
    MlpTape cond_tape;
    MlpTape scale_tape;
    MlpTape translate_tape;
};

struct FlowTape {
    std::vector<CouplingTape> layers;
    Matrix base;     // images in base space
    Vector log_det;  // per row
};

// Batched forward pass recording everything the backward pass needs.
FlowTape flow_forward_batch(const ConditionalFlow& f, const Matrix& z, const Matrix& c);

struct FlowGradients {
    ConditionalFlow grads;  // same shape as the flow, holding ∂(mean NLL)/∂θ
    double mean_nll = 0.0;
};

// Reverse-mode gradient of the mean negative log-likelihood over the batch.
FlowGradients flow_gradients(const ConditionalFlow& f, const Matrix& z, const Matrix& c);

double mean_nll(const ConditionalFlow& f, const Matrix& z, const Matrix& c);

struct FlowTrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-5;
    std::size_t batch_size = 128;  // 0 = full batch
    std::size_t max_epochs = 500;
    std::size_t patience = 20;
    std::uint64_t seed = 0;
    double val_fraction = 0.2;
    bool standardize = true;
};

struct FlowEpochLog {
    std::size_t epoch = 0;  // 0 is the untrained model
    double train_nll = 0.0;  // mean batch NLL seen before each update (epoch 0: full pass)
    double val_nll = 0.0;
};

struct FlowTrainResult {
    ConditionalFlow flow;  // best validation checkpoint
    std::vector<FlowEpochLog> log;
    std::size_t best_epoch = 0;
    double best_val_nll = 0.0;
    bool early_stopped = false;
};

// Throws Errc::Diverged when the training NLL stops being finite.
FlowTrainResult flow_train(const Matrix& z, const Matrix& c, const FlowArchitecture& arch,
                           const FlowTrainConfig& cfg);

}  // namespace luq
