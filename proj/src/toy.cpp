#include "luq/toy.hpp"

#include "luq/error.hpp"
#include "luq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <utility>

namespace luq {

namespace {

void softmax_rows(Matrix& logits) {
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        const double hi = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double& v : row) {
            v = std::exp(v - hi);
            s += v;
        }
        for (double& v : row) v /= s;
    }
}

std::size_t class_index(const Matrix& targets, std::size_t r, std::size_t k) {
    const double t = targets(r, 0);
    if (t < 0.0 || t >= static_cast<double>(k) || t != std::floor(t)) {
        fail(Errc::InvalidArgument, "classification target " + std::to_string(t) + " is not a class index");
    }
    return static_cast<std::size_t>(t);
}

void check_targets(const MlpModel& m, const Matrix& inputs, const Matrix& targets) {
    if (inputs.rows() != targets.rows()) fail(Errc::DimMismatch, "inputs and targets differ in row count");
    if (inputs.rows() == 0) fail(Errc::EmptyInput, "no training rows");
    if (m.head == Head::Regression && targets.cols() != m.net.output_dim()) {
        fail(Errc::DimMismatch, "regression targets must match the output width");
    }
    if (m.head == Head::Classification && targets.cols() != 1) {
        fail(Errc::DimMismatch, "classification targets must be a single class-index column");
    }
}

}  // namespace

MlpModel make_mlp_model(std::vector<std::size_t> layer_dims, Head head, std::uint64_t seed) {
    MlpModel m{Mlp(std::move(layer_dims)), head};
    if (m.net.depth() < 2) fail(Errc::InvalidArgument, "toy MLP needs at least one hidden layer");
    std::mt19937_64 rng(seed);
    init_glorot_uniform(m.net, rng);
    return m;
}

Matrix mlp_predict(const MlpModel& m, const Matrix& inputs) {
    Matrix out = mlp_forward(m.net, inputs);
    if (m.head == Head::Classification) softmax_rows(out);
    return out;
}

FeatureMatrix latent_extract(const MlpModel& m, std::size_t layer_index, const Matrix& inputs) {
    if (layer_index + 1 >= m.net.depth()) {
        fail(Errc::BadLayerIndex, "latent_extract: layer " + std::to_string(layer_index) + " is not a hidden layer (" +
                                      std::to_string(m.net.depth() - 1) + " hidden layers)");
    }
    MlpTape tape;
    mlp_forward(m.net, inputs, &tape);
    return FeatureMatrix{std::move(tape.activations[layer_index + 1]), static_cast<int>(layer_index), "mlp"};
}

MlpLossGradients mlp_loss_gradients(const MlpModel& m, const Matrix& inputs, const Matrix& targets) {
    check_targets(m, inputs, targets);
    MlpTape tape;
    Matrix out = mlp_forward(m.net, inputs, &tape);
    const std::size_t n = inputs.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix grad(n, out.cols());
    double loss = 0.0;
    if (m.head == Head::Regression) {
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < out.cols(); ++j) {
                const double d = out(r, j) - targets(r, j);
                loss += d * d;
                grad(r, j) = 2.0 * d * inv_n;
            }
        }
    } else {
        const std::size_t k = out.cols();
        Matrix probs = out;
        softmax_rows(probs);
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t y = class_index(targets, r, k);
            const auto logits = out.row(r);
            const double hi = *std::max_element(logits.begin(), logits.end());
            double s = 0.0;
            for (double v : logits) s += std::exp(v - hi);
            loss += hi + std::log(s) - logits[y];
            for (std::size_t j = 0; j < k; ++j) grad(r, j) = (probs(r, j) - (j == y ? 1.0 : 0.0)) * inv_n;
        }
    }
    MlpLossGradients result{loss * inv_n, m.net};
    set_zero(result.grads);
    mlp_backward(m.net, tape, grad, result.grads);
    return result;
}

double mlp_loss(const MlpModel& m, const Matrix& inputs, const Matrix& targets) {
    check_targets(m, inputs, targets);
    const Matrix out = mlp_forward(m.net, inputs);
    const std::size_t n = inputs.rows();
    double loss = 0.0;
    if (m.head == Head::Regression) {
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < out.cols(); ++j) loss += (out(r, j) - targets(r, j)) * (out(r, j) - targets(r, j));
    } else {
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t y = class_index(targets, r, out.cols());
            const auto logits = out.row(r);
            const double hi = *std::max_element(logits.begin(), logits.end());
            double s = 0.0;
            for (double v : logits) s += std::exp(v - hi);
            loss += hi + std::log(s) - logits[y];
        }
    }
    return loss / static_cast<double>(n);
}

MlpTrainResult mlp_train(const Matrix& inputs, const Matrix& targets, std::vector<std::size_t> layer_dims, Head head,
                         const MlpTrainConfig& cfg) {
    MlpTrainResult result{make_mlp_model(std::move(layer_dims), head, cfg.seed), {}};
    MlpModel& model = result.model;
    check_targets(model, inputs, targets);

    auto params = model.net.parameter_blocks();
    Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay}, params);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t n = inputs.rows();
    const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    std::vector<double> best;  // running minimum of the loss log
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        if (batch < n) std::shuffle(perm.begin(), perm.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(start + batch, n);
            MlpLossGradients lg;
            if (batch == n) {
                lg = mlp_loss_gradients(model, inputs, targets);
            } else {
                const std::span<const std::size_t> idx(perm.data() + start, stop - start);
                lg = mlp_loss_gradients(model, inputs.select_rows(idx), targets.select_rows(idx));
            }
            if (!std::isfinite(lg.loss)) {
                fail(Errc::Diverged, "mlp_train: loss became non-finite at epoch " + std::to_string(epoch));
            }
            epoch_loss += lg.loss * static_cast<double>(stop - start);
            adam.step(params, std::as_const(lg.grads).parameter_blocks());
        }
        const double loss = epoch_loss / static_cast<double>(n);
        result.loss_log.push_back(loss);
        // Full-batch Adam oscillates, so compare best losses rather than
        // single epochs: stop once the last window failed to beat the best
        // loss seen before it by min_improvement.
        best.push_back(std::min(best.empty() ? loss : best.back(), loss));
        const std::size_t w = cfg.plateau_window;
        if (w > 0 && best.size() > w) {
            if (best[best.size() - 1 - w] - best.back() < cfg.min_improvement) break;
        }
    }
    return result;
}

double toy_function(double x) {
    return 0.5 * (std::sin(4.0 * std::numbers::pi * x - std::numbers::pi / 2.0) + x);
}

RegressionData gen_regression_data(const ToyRegressionSpec& spec) {
    if (!(spec.x_lo < spec.x_hi)) fail(Errc::InvalidArgument, "toy regression: x_lo must be below x_hi");
    const bool has_gap = spec.gap_lo < spec.gap_hi;
    if (has_gap && (spec.gap_lo < spec.x_lo || spec.gap_hi > spec.x_hi)) {
        fail(Errc::InvalidArgument, "toy regression: gap must lie inside the x range");
    }
    if (spec.noise_sigma < 0.0) fail(Errc::InvalidArgument, "toy regression: noise_sigma must be non-negative");
    const double gap = has_gap ? spec.gap_hi - spec.gap_lo : 0.0;
    const double length = spec.x_hi - spec.x_lo - gap;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    RegressionData d;
    d.x.reserve(spec.n_train);
    d.y.reserve(spec.n_train);
    for (std::size_t i = 0; i < spec.n_train; ++i) {
        double x = spec.x_lo + unit(rng) * length;
        if (has_gap && x >= spec.gap_lo) x += gap;
        if (has_gap && x > spec.gap_lo && x < spec.gap_hi) x = spec.gap_hi;
        d.x.push_back(x);
        const double eps = spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0;
        d.y.push_back(toy_function(x) + eps);
    }
    return d;
}

ClassificationData gen_classification_data(const ToyClassificationSpec& spec) {
    if (spec.n_classes < 2) fail(Errc::InvalidArgument, "toy classification needs at least 2 classes");
    if (spec.centers.size() != spec.n_classes) fail(Errc::DimMismatch, "toy classification: one center per class");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.sigma);
    ClassificationData d{Matrix(spec.n_classes * spec.n_per_class, 2), {}};
    d.labels.reserve(d.x.rows());
    std::size_t r = 0;
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
        for (std::size_t k = 0; k < spec.n_classes; ++k) {
            d.x(r, 0) = spec.centers[k].first + noise(rng);
            d.x(r, 1) = spec.centers[k].second + noise(rng);
            d.labels.push_back(static_cast<int>(k));
            ++r;
        }
    }
    return d;
}

ToyClassificationSpec shifted_spec(ToyClassificationSpec spec, double shift) {
    for (auto& c : spec.centers) {
        c.first += shift;
        c.second += shift;
    }
    return spec;
}

Matrix perturb(const Matrix& inputs, const Perturbation& p, std::uint64_t seed) {
    Matrix out = inputs;
    switch (p.kind) {
        case Perturbation::Kind::GaussianNoise: {
            if (p.value < 0.0) fail(Errc::BadKind, "gaussian_noise needs sigma >= 0");
            if (p.value == 0.0) return out;
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> noise(0.0, p.value);
            for (double& v : out.data()) v += noise(rng);
            return out;
        }
        case Perturbation::Kind::Rotate2d: {
            if (inputs.cols() != 2) fail(Errc::BadKind, "rotate_2d needs 2-D inputs");
            const double c = std::cos(p.value);
            const double s = std::sin(p.value);
            for (std::size_t r = 0; r < out.rows(); ++r) {
                const double x = inputs(r, 0);
                const double y = inputs(r, 1);
                out(r, 0) = c * x - s * y;
                out(r, 1) = s * x + c * y;
            }
            return out;
        }
        case Perturbation::Kind::FlipAxis: {
            if (p.axis >= inputs.cols()) fail(Errc::BadKind, "flip_axis: axis out of range");
            for (std::size_t r = 0; r < out.rows(); ++r) out(r, p.axis) = -out(r, p.axis);
            return out;
        }
    }
    fail(Errc::BadKind, "unknown perturbation kind");
}

EnsembleModel train_ensemble(const Matrix& inputs, const Matrix& targets, std::vector<std::size_t> layer_dims,
                             Head head, const MlpTrainConfig& cfg, std::size_t members) {
    if (members == 0) fail(Errc::InvalidArgument, "ensemble needs at least one member");
    EnsembleModel e;
    e.members.resize(members);
    parallel_for(members, [&](std::size_t i) {
        MlpTrainConfig member_cfg = cfg;
        member_cfg.seed = cfg.seed + i;
        e.members[i] = mlp_train(inputs, targets, layer_dims, head, member_cfg).model;
    });
    return e;
}

EnsembleDecomposition decompose_classification(std::span<const Vector> member_probs) {
    if (member_probs.empty()) fail(Errc::EmptyInput, "decompose_classification: no members");
    const std::size_t k = member_probs.front().size();
    Vector mean(k, 0.0);
    double mean_entropy = 0.0;
    for (const auto& p : member_probs) {
        if (p.size() != k) fail(Errc::DimMismatch, "decompose_classification: members disagree on class count");
        double h = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            mean[j] += p[j];
            if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
        }
        mean_entropy += h;
    }
    const double m = static_cast<double>(member_probs.size());
    mean_entropy /= m;
    double total = 0.0;
    for (double& v : mean) {
        v /= m;
        if (v > 0.0) total -= v * std::log(v);
    }
    return {total, total - mean_entropy, mean_entropy};
}

EnsembleScores ensemble_scores(const EnsembleModel& e, const Matrix& inputs) {
    if (e.members.size() < 2) fail(Errc::InvalidArgument, "ensemble_scores needs at least 2 members");
    const Head head = e.members.front().head;
    std::vector<Matrix> preds;
    preds.reserve(e.members.size());
    for (const auto& m : e.members) {
        if (m.head != head || m.net.layer_dims != e.members.front().net.layer_dims) {
            fail(Errc::InvalidArgument, "ensemble members must share one architecture");
        }
        preds.push_back(mlp_predict(m, inputs));
    }
    const std::size_t n = inputs.rows();
    EnsembleScores s;
    s.epistemic.resize(n);
    s.aleatoric.resize(n);
    const double m = static_cast<double>(e.members.size());
    if (head == Head::Classification) {
        std::vector<Vector> member_probs(e.members.size());
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < preds.size(); ++i) {
                const auto row = preds[i].row(r);
                member_probs[i].assign(row.begin(), row.end());
            }
            const auto d = decompose_classification(member_probs);
            s.epistemic[r] = d.epistemic;
            s.aleatoric[r] = d.aleatoric;
        }
    } else {
        s.mean_prediction.resize(n);
        for (std::size_t r = 0; r < n; ++r) {
            // offsets from the first member keep agreeing members at exactly
            // zero spread and their shared prediction
            const double ref = preds.front()(r, 0);
            double shift = 0.0;
            for (const auto& p : preds) shift += p(r, 0) - ref;
            shift /= m;
            double var = 0.0;
            for (const auto& p : preds) var += (p(r, 0) - ref - shift) * (p(r, 0) - ref - shift);
            s.mean_prediction[r] = ref + shift;
            s.epistemic[r] = var / m;
            s.aleatoric[r] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return s;
}

}  // namespace luq
