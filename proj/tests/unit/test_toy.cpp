#include "luq/toy.hpp"

#include "../common/oracles.hpp"
#include "support.hpp"

#include <numbers>

using namespace luq;
using luq::test::examples;

namespace {

double rmse(const Matrix& pred, const Vector& y) {
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ss += (pred(i, 0) - y[i]) * (pred(i, 0) - y[i]);
    return std::sqrt(ss / static_cast<double>(y.size()));
}

}  // namespace

TEST_CASE("toy function examples" * examples()) {
    CHECK(std::abs(toy_function(0.0) - (-0.5)) < 1e-15);
    CHECK(std::abs(toy_function(0.25) - 0.625) < 1e-15);
    CHECK(std::abs(toy_function(0.25) - 0.5 * (std::sin(std::numbers::pi / 2.0) + 0.25)) < 1e-15);
}

TEST_CASE("regression data avoids the gap" * examples()) {
    ToyRegressionSpec spec;
    spec.seed = 3;
    const RegressionData d = gen_regression_data(spec);
    REQUIRE(d.x.size() == 750);
    REQUIRE(d.y.size() == 750);
    std::size_t left = 0;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        CHECK(d.x[i] >= -1.0);
        CHECK(d.x[i] <= 1.0);
        CHECK_FALSE((d.x[i] > -0.25 && d.x[i] < 0.25));
        CHECK(d.y[i] == toy_function(d.x[i]));
        left += d.x[i] < 0.0 ? 1 : 0;
    }
    // both sides of the gap are populated in proportion to their width
    CHECK(left > 300);
    CHECK(left < 450);
}

TEST_CASE("regression noise and determinism") {
    ToyRegressionSpec spec;
    spec.noise_sigma = 0.1;
    spec.n_train = 20000;
    spec.seed = 4;
    const RegressionData d = gen_regression_data(spec);
    double ss = 0.0;
    for (std::size_t i = 0; i < d.x.size(); ++i) ss += std::pow(d.y[i] - toy_function(d.x[i]), 2);
    CHECK(std::abs(std::sqrt(ss / static_cast<double>(d.x.size())) - 0.1) < 0.003);
    const RegressionData again = gen_regression_data(spec);
    CHECK(again.x == d.x);
    CHECK(again.y == d.y);
}

TEST_CASE("classification data") {
    ToyClassificationSpec spec;
    spec.n_per_class = 200;
    spec.seed = 5;
    const ClassificationData d = gen_classification_data(spec);
    REQUIRE(d.x.rows() == 800);
    REQUIRE(d.x.cols() == 2);
    std::vector<double> mx(4, 0.0), my(4, 0.0);
    std::vector<std::size_t> n(4, 0);
    for (std::size_t i = 0; i < d.x.rows(); ++i) {
        const auto k = static_cast<std::size_t>(d.labels[i]);
        mx[k] += d.x(i, 0);
        my[k] += d.x(i, 1);
        ++n[k];
    }
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(n[k] == 200);
        CHECK(std::abs(mx[k] / 200.0 - spec.centers[k].first) < 0.1);
        CHECK(std::abs(my[k] / 200.0 - spec.centers[k].second) < 0.1);
    }
    const ToyClassificationSpec moved = shifted_spec(spec, 8.0);
    CHECK(moved.centers[2] == std::pair{6.0, 6.0});
}

TEST_CASE("mlp gradients match finite differences" * examples()) {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 4; ++rep) {
        const Matrix x = luq::test::random_matrix(9, 2, rng);
        {
            const MlpModel m = make_mlp_model({2, 7, 7, 1}, Head::Regression, 100 + rep);
            const Matrix y = luq::test::random_matrix(9, 1, rng);
            const auto r = oracle::mlp_gradient_check(m, x, y);
            CHECK(r.checked > 0);
            CHECK(r.max_rel_error < 1e-4);
        }
        {
            const MlpModel m = make_mlp_model({2, 7, 7, 3}, Head::Classification, 200 + rep);
            Matrix y(9, 1);
            for (std::size_t i = 0; i < 9; ++i) y(i, 0) = static_cast<double>(i % 3);
            const auto r = oracle::mlp_gradient_check(m, x, y);
            CHECK(r.checked > 0);
            CHECK(r.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("classification predictions are probabilities") {
    std::mt19937_64 rng(7);
    const MlpModel m = make_mlp_model({2, 5, 4}, Head::Classification, 1);
    const Matrix p = mlp_predict(m, luq::test::random_matrix(6, 2, rng, 5.0));
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (double v : p.row(i)) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-14);
    }
}

TEST_CASE("mlp fits a constant target" * examples()) {
    Matrix x(64, 1);
    for (std::size_t i = 0; i < 64; ++i) x(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / 63.0;
    const Matrix y(64, 1, 0.37);
    MlpTrainConfig cfg;
    cfg.learning_rate = 3e-3;
    cfg.max_epochs = 3000;
    const MlpTrainResult r = mlp_train(x, y, {1, 16, 16, 1}, Head::Regression, cfg);
    CHECK(rmse(mlp_predict(r.model, x), Vector(64, 0.37)) < 1e-3);
    CHECK(r.loss_log.size() <= 3000);
}

TEST_CASE("mlp reaches the toy regression accuracy" * examples()) {
    ToyRegressionSpec spec;
    spec.seed = 8;
    const RegressionData d = gen_regression_data(spec);
    MlpTrainConfig cfg;
    cfg.learning_rate = 3e-3;
    cfg.max_epochs = 500;
    cfg.seed = 1;
    const MlpTrainResult r =
        mlp_train(Matrix::column(d.x), Matrix::column(d.y), {1, 50, 50, 50, 50, 1}, Head::Regression, cfg);
    CHECK(rmse(mlp_predict(r.model, Matrix::column(d.x)), d.y) < 0.05);
}

TEST_CASE("mlp training is deterministic and validates its data") {
    std::mt19937_64 rng(9);
    const Matrix x = luq::test::random_matrix(30, 2, rng);
    const Matrix y = luq::test::random_matrix(30, 1, rng);
    MlpTrainConfig cfg;
    cfg.max_epochs = 50;
    cfg.batch_size = 8;
    cfg.seed = 3;
    const MlpTrainResult a = mlp_train(x, y, {2, 8, 1}, Head::Regression, cfg);
    const MlpTrainResult b = mlp_train(x, y, {2, 8, 1}, Head::Regression, cfg);
    CHECK(a.model == b.model);
    CHECK(a.loss_log == b.loss_log);
    CHECK_THROWS_CODE(mlp_train(Matrix(0, 2), Matrix(0, 1), {2, 8, 1}, Head::Regression, cfg), Errc::EmptyInput);
    cfg.learning_rate = 1e6;
    CHECK_THROWS_CODE(mlp_train(x, Matrix(30, 1, 1e200), {2, 8, 1}, Head::Regression, cfg), Errc::Diverged);
}

TEST_CASE("latent extraction examples" * examples()) {
    const MlpModel m = make_mlp_model({1, 50, 50, 50, 50, 1}, Head::Regression, 4);
    const FeatureMatrix one = latent_extract(m, 3, Matrix::from_rows({{0.3}}));
    CHECK(one.rows() == 1);
    CHECK(one.cols() == 50);
    CHECK(one.layer == 3);

    const FeatureMatrix twice = latent_extract(m, 2, Matrix::from_rows({{0.7}, {0.7}}));
    CHECK(luq::test::to_vec(twice.values.row(0)) == luq::test::to_vec(twice.values.row(1)));

    MlpModel zero = m;
    for (auto& w : zero.net.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
    for (auto& b : zero.net.biases) std::fill(b.begin(), b.end(), 0.0);
    const FeatureMatrix z = latent_extract(zero, 1, Matrix::from_rows({{1.0}, {-2.0}}));
    for (double v : z.values.data()) CHECK(v == 0.0);

    CHECK_THROWS_CODE(latent_extract(m, 4, Matrix::from_rows({{0.3}})), Errc::BadLayerIndex);
}

TEST_CASE("latents are the hidden activations that feed the head") {
    const MlpModel m = make_mlp_model({2, 6, 5, 1}, Head::Regression, 10);
    std::mt19937_64 rng(10);
    const Matrix x = luq::test::random_matrix(4, 2, rng);
    const FeatureMatrix z = latent_extract(m, 1, x);
    const Matrix head = matmul(z.values, m.net.weights[2]);
    const Matrix out = mlp_predict(m, x);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(head(i, 0) + m.net.biases[2][0] - out(i, 0)) < 1e-14);
    for (double v : z.values.data()) CHECK(v >= 0.0);
}

TEST_CASE("perturbation examples" * examples()) {
    std::mt19937_64 rng(11);
    const Matrix x = luq::test::random_matrix(50, 2, rng);
    CHECK(perturb(x, Perturbation::gaussian_noise(0.0), 1) == x);

    const Matrix half = perturb(x, Perturbation::rotate_2d(std::numbers::pi), 0);
    const Matrix back = perturb(half, Perturbation::rotate_2d(std::numbers::pi), 0);
    CHECK(luq::test::max_abs_diff(back.data(), x.data()) < 1e-12);

    const Matrix big(100000, 1, 0.5);
    const Matrix noisy = perturb(big, Perturbation::gaussian_noise(0.3), 5);
    double ss = 0.0, mean = 0.0;
    for (double v : noisy.data()) mean += v - 0.5;
    mean /= 100000.0;
    for (double v : noisy.data()) ss += std::pow(v - 0.5 - mean, 2);
    CHECK(std::abs(std::sqrt(ss / 99999.0) - 0.3) < 0.02 * 0.3);
}

TEST_CASE("perturbation properties and errors") {
    std::mt19937_64 rng(12);
    const Matrix x = luq::test::random_matrix(10, 2, rng);
    CHECK(perturb(x, Perturbation::gaussian_noise(1.0), 3) == perturb(x, Perturbation::gaussian_noise(1.0), 3));
    CHECK_FALSE(perturb(x, Perturbation::gaussian_noise(1.0), 3) == perturb(x, Perturbation::gaussian_noise(1.0), 4));
    const Matrix flipped = perturb(x, Perturbation::flip_axis(1), 0);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(flipped(i, 0) == x(i, 0));
        CHECK(flipped(i, 1) == -x(i, 1));
    }
    const Matrix quarter = perturb(x, Perturbation::rotate_2d(std::numbers::pi / 2.0), 0);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(std::abs(quarter(i, 0) + x(i, 1)) < 1e-15);
        CHECK(std::abs(quarter(i, 1) - x(i, 0)) < 1e-15);
    }
    CHECK_THROWS_CODE(perturb(Matrix(3, 1), Perturbation::rotate_2d(1.0), 0), Errc::BadKind);
    CHECK_THROWS_CODE(perturb(x, Perturbation::flip_axis(2), 0), Errc::BadKind);
    CHECK_THROWS_CODE(perturb(x, Perturbation::gaussian_noise(-1.0), 0), Errc::BadKind);
}

TEST_CASE("ensemble decomposition examples" * examples()) {
    const std::vector<Vector> disagree{{1.0, 0.0}, {0.0, 1.0}};
    const EnsembleDecomposition d = decompose_classification(disagree);
    CHECK(std::abs(d.epistemic - std::log(2.0)) < 1e-15);
    CHECK(d.aleatoric == 0.0);

    const std::vector<Vector> same{{0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}};
    CHECK(std::abs(decompose_classification(same).epistemic) < 1e-15);

    std::mt19937_64 rng(13);
    std::exponential_distribution<double> e(1.0);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<Vector> members(2 + rep % 5, Vector(4));
        for (auto& m : members) {
            double s = 0.0;
            for (double& v : m) s += (v = e(rng));
            for (double& v : m) v /= s;
        }
        const EnsembleDecomposition r = decompose_classification(members);
        CHECK(std::abs(r.epistemic + r.aleatoric - r.total) < 1e-12);
        CHECK(r.epistemic >= -1e-15);
    }
}

TEST_CASE("ensemble scores") {
    const MlpModel reg = make_mlp_model({1, 8, 1}, Head::Regression, 3);
    const Matrix x = Matrix::from_rows({{-0.5}, {0.0}, {0.9}});
    const EnsembleScores same = ensemble_scores(EnsembleModel{{reg, reg, reg}}, x);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(same.epistemic[i] == 0.0);
        CHECK(std::isnan(same.aleatoric[i]));
        CHECK(same.mean_prediction[i] == mlp_predict(reg, x)(i, 0));
    }
    const MlpModel cls = make_mlp_model({1, 8, 3}, Head::Classification, 3);
    const EnsembleScores csame = ensemble_scores(EnsembleModel{{cls, cls}}, x);
    for (double v : csame.epistemic) CHECK(std::abs(v) < 1e-15);

    MlpModel other = reg;
    other.net.biases.back()[0] += 2.0;
    const EnsembleScores spread = ensemble_scores(EnsembleModel{{reg, other}}, x);
    for (double v : spread.epistemic) CHECK(std::abs(v - 1.0) < 1e-12);

    CHECK_THROWS_CODE(ensemble_scores(EnsembleModel{{reg}}, x), Errc::InvalidArgument);
    CHECK_THROWS_CODE(ensemble_scores(EnsembleModel{{reg, cls}}, x), Errc::InvalidArgument);
}

TEST_CASE("ensemble members differ only by seed") {
    std::mt19937_64 rng(14);
    const Matrix x = luq::test::random_matrix(20, 1, rng);
    const Matrix y = luq::test::random_matrix(20, 1, rng);
    MlpTrainConfig cfg;
    cfg.max_epochs = 20;
    cfg.seed = 40;
    const EnsembleModel e = train_ensemble(x, y, {1, 6, 1}, Head::Regression, cfg, 3);
    REQUIRE(e.members.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        MlpTrainConfig c = cfg;
        c.seed = 40 + i;
        CHECK(e.members[i] == mlp_train(x, y, {1, 6, 1}, Head::Regression, c).model);
    }
    CHECK_FALSE(e.members[0] == e.members[1]);
}
