#pragma once

// Desk-scale experiments: toy data generators, small MLP regressors and
// classifiers with latent extraction, input perturbations, and a deep
// ensemble baseline.

#include "luq/linalg.hpp"
#include "luq/nn.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace luq {

enum class Head { Regression, Classification };

struct MlpModel {
    Mlp net;
    Head head = Head::Regression;

    std::size_t hidden_layers() const noexcept { return net.depth() - 1; }
    bool operator==(const MlpModel&) const = default;
};

MlpModel make_mlp_model(std::vector<std::size_t> layer_dims, Head head, std::uint64_t seed);

// Regression: raw outputs (rows × 1). Classification: softmax probabilities.
Matrix mlp_predict(const MlpModel& m, const Matrix& inputs);

// Post-ReLU activations of hidden layer `layer_index` (0-based), one row per input.
FeatureMatrix latent_extract(const MlpModel& m, std::size_t layer_index, const Matrix& inputs);

struct MlpLossGradients {
    double loss = 0.0;
    Mlp grads;
};

// Mean squared error for regression (targets rows × 1) and mean
// cross-entropy for classification (targets hold class indices in column 0).
MlpLossGradients mlp_loss_gradients(const MlpModel& m, const Matrix& inputs, const Matrix& targets);
double mlp_loss(const MlpModel& m, const Matrix& inputs, const Matrix& targets);

struct MlpTrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    std::size_t max_epochs = 5000;
    std::size_t batch_size = 0;         // 0 = full batch
    std::size_t plateau_window = 100;   // stop when the best loss improved by less
    double min_improvement = 1e-7;      // than this over the window
    std::uint64_t seed = 0;
};

struct MlpTrainResult {
    MlpModel model;
    std::vector<double> loss_log;  // per epoch, mean batch loss seen before each update
};

// Throws Errc::Diverged when the loss becomes non-finite.
MlpTrainResult mlp_train(const Matrix& inputs, const Matrix& targets, std::vector<std::size_t> layer_dims,
                         Head head, const MlpTrainConfig& cfg);

// ½(sin(4πx − π/2) + x)
double toy_function(double x);

struct ToyRegressionSpec {
    std::size_t n_train = 750;
    double x_lo = -1.0;
    double x_hi = 1.0;
    double gap_lo = -0.25;
    double gap_hi = 0.25;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct RegressionData {
    Vector x;
    Vector y;
};

// x uniform on [x_lo, x_hi] minus the gap, y = toy_function(x) + noise.
RegressionData gen_regression_data(const ToyRegressionSpec& spec);

struct ToyClassificationSpec {
    std::size_t n_classes = 4;
    std::vector<std::pair<double, double>> centers{{2.0, 2.0}, {-2.0, 2.0}, {-2.0, -2.0}, {2.0, -2.0}};
    double sigma = 0.4;
    std::size_t n_per_class = 500;
    std::uint64_t seed = 0;
};

struct ClassificationData {
    Matrix x;                 // rows × 2
    std::vector<int> labels;  // true cluster ids
};

ClassificationData gen_classification_data(const ToyClassificationSpec& spec);

// The same blobs moved by `shift` along both axes.
ToyClassificationSpec shifted_spec(ToyClassificationSpec spec, double shift);

struct Perturbation {
    enum class Kind { GaussianNoise, Rotate2d, FlipAxis };
    Kind kind = Kind::GaussianNoise;
    double value = 0.0;     // sigma or angle in radians
    std::size_t axis = 0;   // FlipAxis only

    static Perturbation gaussian_noise(double sigma) { return {Kind::GaussianNoise, sigma, 0}; }
    static Perturbation rotate_2d(double radians) { return {Kind::Rotate2d, radians, 0}; }
    static Perturbation flip_axis(std::size_t axis) { return {Kind::FlipAxis, 0.0, axis}; }
};

// Throws Errc::BadKind for a perturbation the inputs cannot take.
Matrix perturb(const Matrix& inputs, const Perturbation& p, std::uint64_t seed);

struct EnsembleModel {
    std::vector<MlpModel> members;
};

// Members differ only in their seed (base_seed + i); trained concurrently
// under the LUQ_THREADS cap.
EnsembleModel train_ensemble(const Matrix& inputs, const Matrix& targets, std::vector<std::size_t> layer_dims,
                             Head head, const MlpTrainConfig& cfg, std::size_t members);

struct EnsembleDecomposition {
    double total = 0.0;      // entropy of the averaged predictive
    double epistemic = 0.0;  // mutual information
    double aleatoric = 0.0;  // mean member entropy
};

EnsembleDecomposition decompose_classification(std::span<const Vector> member_probs);

struct EnsembleScores {
    Vector epistemic;
    Vector aleatoric;        // NaN for regression members (no noise head)
    Vector mean_prediction;  // regression only
};

// Classification: mutual-information decomposition. Regression: variance
// of the member means.
EnsembleScores ensemble_scores(const EnsembleModel& e, const Matrix& inputs);

}  // namespace luq
