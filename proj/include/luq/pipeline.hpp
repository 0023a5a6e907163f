#pragma once

// End-to-end toy experiments shared by the `toy` command and the acceptance
// suite. Each run trains the discriminative model, extracts latents, fits the
// latent densities and an output prior, and scores a held-out evaluation set
// next to a deep-ensemble baseline.

#include "luq/flow.hpp"
#include "luq/gmm.hpp"
#include "luq/metrics.hpp"
#include "luq/priors.hpp"
#include "luq/toy.hpp"
#include "luq/uncertainty.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace luq {

struct ToyRegressionConfig {
    ToyRegressionSpec data;
    std::vector<std::size_t> layer_dims{1, 50, 50, 50, 50, 1};
    MlpTrainConfig mlp;
    FlowArchitecture flow_arch;
    FlowTrainConfig flow;
    UniformPrior prior{-10.0, 10.0};
    std::size_t grid_points = 1000;
    double mass = 0.2;
    std::size_t eval_points = 201;  // equidistant over the x range
    std::size_t ensemble_members = 10;
    MlpTrainConfig ensemble_mlp;
    std::uint64_t seed = 0;

    ToyRegressionConfig();
};

struct ToyRegressionResult {
    RegressionData train;
    MlpTrainResult mlp;
    FlowTrainResult flow;
    Vector eval_x;
    Vector truth;  // noiseless toy function
    Vector prediction;
    Vector epistemic;
    Vector aleatoric;
    Vector lower;  // confidence band at the configured mass
    Vector upper;
    Vector ensemble_mean;
    Vector ensemble_epistemic;
    std::vector<int> in_gap;

    double train_rmse = 0.0;
    double mean_epistemic_gap = 0.0;
    double mean_epistemic_train = 0.0;
    double ensemble_epistemic_gap = 0.0;
    double ensemble_epistemic_train = 0.0;
    double band_coverage = 0.0;  // share of training-region points with f(x) inside the band
};

ToyRegressionResult run_toy_regression(const ToyRegressionConfig& cfg);

struct ToyClassificationConfig {
    ToyClassificationSpec data;
    std::size_t n_test_per_class = 250;
    std::vector<std::size_t> hidden{32, 32};
    MlpTrainConfig mlp;
    EmOptions em;
    double ood_shift = 8.0;
    std::vector<double> noise_sigmas{0.5, 1.0, 2.0, 4.0};
    double calibration_step = 5.0;
    std::size_t ensemble_members = 10;
    MlpTrainConfig ensemble_mlp;
    std::uint64_t seed = 0;

    ToyClassificationConfig();
};

struct NoiseSweepPoint {
    double sigma = 0.0;
    double auroc = 0.0;
    double median_epistemic = 0.0;
    double ensemble_auroc = 0.0;
};

struct ToyClassificationResult {
    ClassificationData train;
    ClassificationData test;
    MlpTrainResult mlp;
    ClassConditionalGmm density;
    CategoricalPrior prior;
    std::vector<int> test_predictions;
    UncertaintyScores test_scores;
    UncertaintyScores ood_scores;
    Vector ensemble_test_epistemic;
    Vector ensemble_ood_epistemic;

    double accuracy = 0.0;
    double ood_auroc = 0.0;
    double ood_ap = 0.0;
    double ood_fpr95 = 0.0;
    double ensemble_ood_auroc = 0.0;
    double median_epistemic_clean = 0.0;
    std::vector<NoiseSweepPoint> noise_sweep;
    CalibrationCurve calibration;      // latent-density aleatoric
    double lowest_decile_accuracy = 0.0;
};

ToyClassificationResult run_toy_classification(const ToyClassificationConfig& cfg);

}  // namespace luq
