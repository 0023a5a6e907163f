#include "luq/pipeline.hpp"

#include "support.hpp"

#include "luq/log.hpp"

using namespace luq;
using luq::test::examples;

namespace {

ToyRegressionConfig quick_regression(std::uint64_t seed) {
    ToyRegressionConfig cfg;
    cfg.seed = seed;
    cfg.mlp.max_epochs = 400;
    cfg.flow.max_epochs = 60;
    cfg.ensemble_members = 0;
    cfg.eval_points = 21;
    return cfg;
}

}  // namespace

TEST_CASE("support-grid refinement converges on the toy model" * examples()) {
    const ToyRegressionConfig cfg = quick_regression(1);
    const ToyRegressionResult r = run_toy_regression(cfg);
    const MlpModel& m = r.mlp.model;
    // training-region points only: inside the gap the posterior over y is a
    // ramp of thousands of nats per unit, far below any practical spacing
    std::vector<double> xs;
    for (std::size_t i = 0; i < r.eval_x.size(); i += 4)
        if (!r.in_gap[i]) xs.push_back(r.eval_x[i]);
    REQUIRE(xs.size() >= 4);
    const FeatureMatrix z = latent_extract(m, m.hidden_layers() - 1, Matrix::column(xs));
    const auto prev = set_warning_sink([](std::string_view) {});
    std::vector<double> worst;
    for (std::size_t n : {1000, 2000, 4000}) {
        const SupportGrid grid = make_grid(cfg.prior.lo, cfg.prior.hi, n);
        double w = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i)
            w = std::max(w, grid_refinement_delta(r.flow.flow, cfg.prior, grid, z.values.row(i)));
        worst.push_back(w);
    }
    set_warning_sink(prev);
    MESSAGE("largest change per doubling from 1000/2000/4000 points: " << worst[0] << " " << worst[1] << " "
                                                                       << worst[2]);
    CHECK(worst[1] < worst[0]);
    CHECK(worst[2] < worst[1]);
    CHECK(worst[2] < 1e-4);
}

TEST_CASE("toy regression result is internally consistent") {
    const ToyRegressionResult r = run_toy_regression(quick_regression(2));
    REQUIRE(r.eval_x.size() == 21);
    CHECK(r.eval_x.front() == -1.0);
    CHECK(r.eval_x.back() == 1.0);
    CHECK(r.train.x.size() == 750);
    CHECK(r.ensemble_epistemic.empty());
    std::size_t gap = 0;
    for (std::size_t i = 0; i < r.eval_x.size(); ++i) {
        CHECK(r.truth[i] == toy_function(r.eval_x[i]));
        CHECK(r.lower[i] <= r.prediction[i]);
        CHECK(r.prediction[i] <= r.upper[i]);
        CHECK(std::isfinite(r.epistemic[i]));
        gap += static_cast<std::size_t>(r.in_gap[i]);
    }
    CHECK(gap == 5);  // x = -0.2 ... 0.2
    CHECK((r.band_coverage >= 0.0 && r.band_coverage <= 1.0));
    CHECK(run_toy_regression(quick_regression(2)).epistemic == r.epistemic);
}

TEST_CASE("toy classification result is internally consistent") {
    ToyClassificationConfig cfg;
    cfg.seed = 3;
    cfg.data.n_per_class = 100;
    cfg.n_test_per_class = 50;
    cfg.mlp.max_epochs = 300;
    cfg.ensemble_members = 0;
    const ToyClassificationResult r = run_toy_classification(cfg);
    CHECK(r.test_scores.epistemic.size() == 200);
    CHECK(r.ood_scores.epistemic.size() == 200);
    CHECK(r.accuracy > 0.95);
    CHECK(r.ood_auroc > 0.95);
    REQUIRE(r.noise_sweep.size() == 4);
    CHECK(r.calibration.percentiles.back() == 100.0);
    CHECK(r.calibration.accuracy.back() == r.accuracy);
    for (double a : r.test_scores.aleatoric) CHECK((a >= 0.0 && a <= std::log(4.0) + 1e-15));
    CHECK(r.prior.classes == std::vector<int>{0, 1, 2, 3});
}
