#include "luq/pipeline.hpp"

#include "luq/error.hpp"

#include <algorithm>
#include <cmath>

namespace luq {

namespace {

// splitmix64 finalizer: independent sub-seeds from one run seed
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double mean_where(const Vector& v, const std::vector<int>& mask, int want) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (mask[i] == want) {
            s += v[i];
            ++n;
        }
    }
    return n == 0 ? std::nan("") : s / static_cast<double>(n);
}

std::vector<int> argmax_rows(const Matrix& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const auto row = probs.row(r);
        out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double median(const Vector& v) { return percentile(v, 50.0); }

}  // namespace

ToyRegressionConfig::ToyRegressionConfig() {
    flow.batch_size = 0;  // full batch on the toy problem
    flow.max_epochs = 300;
    ensemble_mlp.learning_rate = 3e-3;
    ensemble_mlp.max_epochs = 200;
}

ToyRegressionResult run_toy_regression(const ToyRegressionConfig& cfg) {
    if (cfg.layer_dims.size() < 3 || cfg.layer_dims.front() != 1 || cfg.layer_dims.back() != 1) {
        fail(Errc::InvalidArgument, "toy regression needs a 1-input, 1-output MLP with a hidden layer");
    }
    if (cfg.eval_points < 2) fail(Errc::InvalidArgument, "toy regression needs at least 2 evaluation points");
    ToyRegressionResult res;

    ToyRegressionSpec spec = cfg.data;
    spec.seed = derive_seed(cfg.seed, 0);
    res.train = gen_regression_data(spec);
    const Matrix x = Matrix::column(res.train.x);
    const Matrix y = Matrix::column(res.train.y);

    MlpTrainConfig mlp_cfg = cfg.mlp;
    mlp_cfg.seed = derive_seed(cfg.seed, 1);
    res.mlp = mlp_train(x, y, cfg.layer_dims, Head::Regression, mlp_cfg);
    const MlpModel& model = res.mlp.model;
    const std::size_t latent_layer = model.hidden_layers() - 1;

    const Matrix train_pred = mlp_predict(model, x);
    double ss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) ss += (train_pred(i, 0) - y(i, 0)) * (train_pred(i, 0) - y(i, 0));
    res.train_rmse = std::sqrt(ss / static_cast<double>(x.rows()));

    // p(z | ŷ) is conditioned on the network's own prediction
    const FeatureMatrix z = latent_extract(model, latent_layer, x);
    FlowTrainConfig flow_cfg = cfg.flow;
    flow_cfg.seed = derive_seed(cfg.seed, 2);
    res.flow = flow_train(z.values, train_pred, cfg.flow_arch, flow_cfg);

    const double step = (spec.x_hi - spec.x_lo) / static_cast<double>(cfg.eval_points - 1);
    for (std::size_t i = 0; i < cfg.eval_points; ++i) {
        const double xi = i + 1 == cfg.eval_points ? spec.x_hi : spec.x_lo + step * static_cast<double>(i);
        res.eval_x.push_back(xi);
        res.truth.push_back(toy_function(xi));
        res.in_gap.push_back(xi > spec.gap_lo && xi < spec.gap_hi ? 1 : 0);
    }
    const Matrix ex = Matrix::column(res.eval_x);
    const Matrix eval_pred = mlp_predict(model, ex);
    res.prediction.assign(eval_pred.data().begin(), eval_pred.data().end());
    const FeatureMatrix ez = latent_extract(model, latent_layer, ex);

    const OutputPrior prior = cfg.prior;
    const SupportGrid grid = make_grid(cfg.prior.lo, cfg.prior.hi, cfg.grid_points);
    const UncertaintyScores scores = score_regression(res.flow.flow, prior, grid, ez.values, true);
    res.epistemic = scores.epistemic;
    res.aleatoric = scores.aleatoric;
    std::size_t covered = 0;
    std::size_t region = 0;
    for (std::size_t i = 0; i < res.eval_x.size(); ++i) {
        const GridPosterior post{grid, scores.posterior[i], 0.0};
        const ConfidenceRegion band = confidence_region(post, res.prediction[i], cfg.mass);
        res.lower.push_back(band.lower);
        res.upper.push_back(band.upper);
        if (!res.in_gap[i]) {
            ++region;
            if (band.lower <= res.truth[i] && res.truth[i] <= band.upper) ++covered;
        }
    }
    res.band_coverage = region == 0 ? std::nan("") : static_cast<double>(covered) / static_cast<double>(region);
    res.mean_epistemic_gap = mean_where(res.epistemic, res.in_gap, 1);
    res.mean_epistemic_train = mean_where(res.epistemic, res.in_gap, 0);

    if (cfg.ensemble_members >= 2) {
        MlpTrainConfig ens_cfg = cfg.ensemble_mlp;
        ens_cfg.seed = derive_seed(cfg.seed, 3);
        const EnsembleModel ens = train_ensemble(x, y, cfg.layer_dims, Head::Regression, ens_cfg, cfg.ensemble_members);
        const EnsembleScores es = ensemble_scores(ens, ex);
        res.ensemble_mean = es.mean_prediction;
        res.ensemble_epistemic = es.epistemic;
        res.ensemble_epistemic_gap = mean_where(res.ensemble_epistemic, res.in_gap, 1);
        res.ensemble_epistemic_train = mean_where(res.ensemble_epistemic, res.in_gap, 0);
    }
    return res;
}

ToyClassificationConfig::ToyClassificationConfig() {
    mlp.max_epochs = 2000;
    mlp.learning_rate = 1e-2;
    ensemble_mlp = mlp;
    ensemble_mlp.max_epochs = 1000;
}

ToyClassificationResult run_toy_classification(const ToyClassificationConfig& cfg) {
    if (cfg.hidden.empty()) fail(Errc::InvalidArgument, "toy classification needs at least one hidden layer");
    ToyClassificationResult res;
    const std::size_t k = cfg.data.n_classes;

    ToyClassificationSpec train_spec = cfg.data;
    train_spec.seed = derive_seed(cfg.seed, 0);
    res.train = gen_classification_data(train_spec);
    ToyClassificationSpec test_spec = cfg.data;
    test_spec.seed = derive_seed(cfg.seed, 1);
    test_spec.n_per_class = cfg.n_test_per_class;
    res.test = gen_classification_data(test_spec);
    ToyClassificationSpec ood_spec = shifted_spec(test_spec, cfg.ood_shift);
    ood_spec.seed = derive_seed(cfg.seed, 2);
    const ClassificationData ood = gen_classification_data(ood_spec);

    std::vector<std::size_t> dims{2};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(k);
    Matrix targets(res.train.labels.size(), 1);
    for (std::size_t i = 0; i < res.train.labels.size(); ++i) targets(i, 0) = res.train.labels[i];

    MlpTrainConfig mlp_cfg = cfg.mlp;
    mlp_cfg.seed = derive_seed(cfg.seed, 3);
    res.mlp = mlp_train(res.train.x, targets, dims, Head::Classification, mlp_cfg);
    const MlpModel& model = res.mlp.model;
    const std::size_t latent_layer = cfg.hidden.size() - 1;

    // densities and prior are conditioned on the predicted labels
    const std::vector<int> train_pred = argmax_rows(mlp_predict(model, res.train.x));
    std::vector<int> declared(k);
    for (std::size_t c = 0; c < k; ++c) declared[c] = static_cast<int>(c);
    res.prior = fit_categorical(train_pred, declared);
    EmOptions em = cfg.em;
    em.seed = derive_seed(cfg.seed, 4);
    res.density = fit_class_conditional(latent_extract(model, latent_layer, res.train.x).values, train_pred, em);

    auto score = [&](const Matrix& inputs) {
        return score_classification(res.density, res.prior, latent_extract(model, latent_layer, inputs).values);
    };
    res.test_predictions = argmax_rows(mlp_predict(model, res.test.x));
    res.test_scores = score(res.test.x);
    res.ood_scores = score(ood.x);

    std::size_t hits = 0;
    std::vector<int> correct(res.test_predictions.size());
    for (std::size_t i = 0; i < correct.size(); ++i) {
        correct[i] = res.test_predictions[i] == res.test.labels[i] ? 1 : 0;
        hits += static_cast<std::size_t>(correct[i]);
    }
    res.accuracy = static_cast<double>(hits) / static_cast<double>(correct.size());

    const auto ood_set = ScoredBinarySet::from_groups(res.ood_scores.epistemic, res.test_scores.epistemic);
    res.ood_auroc = auroc(ood_set);
    res.ood_ap = average_precision(ood_set);
    res.ood_fpr95 = fpr_at_tpr(ood_set, 0.95);
    res.median_epistemic_clean = median(res.test_scores.epistemic);

    std::optional<EnsembleModel> ens;
    if (cfg.ensemble_members >= 2) {
        MlpTrainConfig ens_cfg = cfg.ensemble_mlp;
        ens_cfg.seed = derive_seed(cfg.seed, 5);
        ens = train_ensemble(res.train.x, targets, dims, Head::Classification, ens_cfg, cfg.ensemble_members);
        res.ensemble_test_epistemic = ensemble_scores(*ens, res.test.x).epistemic;
        res.ensemble_ood_epistemic = ensemble_scores(*ens, ood.x).epistemic;
        res.ensemble_ood_auroc =
            auroc(ScoredBinarySet::from_groups(res.ensemble_ood_epistemic, res.ensemble_test_epistemic));
    }

    for (std::size_t s = 0; s < cfg.noise_sigmas.size(); ++s) {
        const double sigma = cfg.noise_sigmas[s];
        const Matrix noisy = perturb(res.test.x, Perturbation::gaussian_noise(sigma), derive_seed(cfg.seed, 100 + s));
        const UncertaintyScores ns = score(noisy);
        NoiseSweepPoint pt;
        pt.sigma = sigma;
        pt.auroc = auroc(ScoredBinarySet::from_groups(ns.epistemic, res.test_scores.epistemic));
        pt.median_epistemic = median(ns.epistemic);
        if (ens) {
            pt.ensemble_auroc = auroc(
                ScoredBinarySet::from_groups(ensemble_scores(*ens, noisy).epistemic, res.ensemble_test_epistemic));
        }
        res.noise_sweep.push_back(pt);
    }

    res.calibration = calibration_curve(res.test_scores.aleatoric, correct, cfg.calibration_step);
    const double decile = percentile(res.test_scores.aleatoric, 10.0);
    std::size_t n_low = 0;
    std::size_t hits_low = 0;
    for (std::size_t i = 0; i < correct.size(); ++i) {
        if (res.test_scores.aleatoric[i] <= decile) {
            ++n_low;
            hits_low += static_cast<std::size_t>(correct[i]);
        }
    }
    res.lowest_decile_accuracy = static_cast<double>(hits_low) / static_cast<double>(n_low);
    return res;
}

}  // namespace luq
