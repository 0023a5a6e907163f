#include "luq/metrics.hpp"

#include "../common/oracles.hpp"
#include "support.hpp"

using namespace luq;
using luq::test::examples;

namespace {

ScoredBinarySet groups(std::vector<double> pos, std::vector<double> neg) {
    return ScoredBinarySet::from_groups(pos, neg);
}

}  // namespace

TEST_CASE("auroc examples" * examples()) {
    CHECK(auroc(groups({0.9, 0.8}, {0.1, 0.2})) == 1.0);
    CHECK(auroc(groups({0.3, 0.5, 0.5, 0.9}, {0.9, 0.5, 0.3, 0.5})) == 0.5);
    CHECK(auroc(groups({0.8, 0.4}, {0.6, 0.2})) == 0.75);
    CHECK(auroc(groups({0.8, 0.4}, {0.6, 0.2})) == oracle::auroc_pairs(groups({0.8, 0.4}, {0.6, 0.2})));
}

TEST_CASE("average precision examples" * examples()) {
    CHECK(average_precision(groups({0.9, 0.8}, {0.2, 0.1})) == 1.0);
    CHECK(average_precision(groups({0.1}, {0.5, 0.6, 0.7})) == 0.25);
    for (std::size_t n = 2; n <= 9; ++n)
        for (std::size_t p = 1; p < n; ++p) {
            ScoredBinarySet s;
            s.scores.assign(n, 0.4);
            s.labels.assign(n, 0);
            std::fill(s.labels.begin(), s.labels.begin() + static_cast<std::ptrdiff_t>(p), 1);
            const double expected = static_cast<double>(p) / static_cast<double>(n);
            CHECK(std::abs(average_precision(s) - expected) < 1e-15);
            std::reverse(s.labels.begin(), s.labels.end());
            CHECK(std::abs(average_precision(s) - expected) < 1e-15);
        }
}

TEST_CASE("fpr_at_tpr examples" * examples()) {
    CHECK(fpr_at_tpr(groups({0.9, 0.8}, {0.1, 0.2})) == 0.0);
    CHECK(fpr_at_tpr(groups({3, 2, 1}, {2.5, 0}), 0.95) == 0.5);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> pos(20000), neg(20000);
    for (double& v : pos) v = n(rng);
    for (double& v : neg) v = n(rng);
    CHECK(std::abs(fpr_at_tpr(groups(pos, neg)) - 0.95) < 0.01);
}

TEST_CASE("ranking metrics need both classes") {
    CHECK_THROWS_CODE(auroc(groups({1.0, 2.0}, {})), Errc::OneClassOnly);
    CHECK_THROWS_CODE(average_precision(groups({}, {1.0})), Errc::OneClassOnly);
    CHECK_THROWS_CODE(fpr_at_tpr(groups({}, {1.0})), Errc::OneClassOnly);
    ScoredBinarySet bad{{0.1, 0.2}, {1, 2}};
    CHECK_THROWS_CODE(auroc(bad), Errc::InvalidArgument);
    ScoredBinarySet uneven{{0.1, 0.2}, {1}};
    CHECK_THROWS_CODE(auroc(uneven), Errc::DimMismatch);
}

TEST_CASE("ranking metrics match brute-force oracles on small instances") {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 1000; ++rep) {
        const ScoredBinarySet s = oracle::random_binary_set(rng);
        CHECK(auroc(s) == oracle::auroc_pairs(s));
        CHECK(std::abs(average_precision(s) - oracle::average_precision_thresholds(s)) < 1e-12);
        CHECK(fpr_at_tpr(s) == oracle::fpr_at_tpr_thresholds(s, 0.95));
        CHECK(fpr_at_tpr(s, 0.5) == oracle::fpr_at_tpr_thresholds(s, 0.5));
    }
}

TEST_CASE("auroc symmetry and rank invariance") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        ScoredBinarySet s = oracle::random_binary_set(rng, 30);
        ScoredBinarySet negated = s;
        ScoredBinarySet warped = s;
        for (double& v : negated.scores) v = -v;
        for (double& v : warped.scores) v = std::exp(3.0 * v) - 7.0;
        CHECK(std::abs(auroc(s) + auroc(negated) - 1.0) < 1e-12);
        CHECK(auroc(warped) == auroc(s));
    }
}

TEST_CASE("percentile interpolates between order statistics") {
    const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
    CHECK(percentile(v, 0.0) == 1.0);
    CHECK(percentile(v, 100.0) == 4.0);
    CHECK(percentile(v, 50.0) == 2.5);
    CHECK(std::abs(percentile(v, 25.0) - 1.75) < 1e-15);
    CHECK_THROWS_CODE(percentile(std::vector<double>{}, 50.0), Errc::EmptyInput);
}

TEST_CASE("calibration curve examples" * examples()) {
    const std::vector<double> u{1, 2, 3, 4};
    const CalibrationCurve all = calibration_curve(u, std::vector<int>{1, 1, 1, 1});
    CHECK(all.percentiles.size() == 20);
    for (double a : all.accuracy) CHECK(a == 1.0);

    const CalibrationCurve c = calibration_curve(u, std::vector<int>{1, 1, 0, 0}, 50.0);
    REQUIRE(c.percentiles == std::vector<double>{50.0, 100.0});
    CHECK(c.accuracy[0] == 1.0);
    CHECK(c.accuracy[1] == 0.5);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> unc(0.0, 2.0);
    std::bernoulli_distribution hit(0.7);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> us(10 + rep);
        std::vector<int> ok(us.size());
        for (std::size_t i = 0; i < us.size(); ++i) {
            us[i] = unc(rng);
            ok[i] = hit(rng) ? 1 : 0;
        }
        const CalibrationCurve cc = calibration_curve(us, ok, 7.0);
        const double overall =
            static_cast<double>(std::count(ok.begin(), ok.end(), 1)) / static_cast<double>(ok.size());
        CHECK(cc.percentiles.back() == 100.0);
        CHECK(cc.accuracy.back() == overall);
        CHECK(std::is_sorted(cc.percentiles.begin(), cc.percentiles.end()));
        for (double a : cc.accuracy) CHECK((a >= 0.0 && a <= 1.0));
    }
}

TEST_CASE("calibration curve errors") {
    CHECK_THROWS_CODE(calibration_curve(std::vector<double>{}, std::vector<int>{}), Errc::EmptyInput);
    CHECK_THROWS_CODE(calibration_curve(std::vector<double>{1.0}, std::vector<int>{1, 0}), Errc::DimMismatch);
}

TEST_CASE("rmse below uncertainty examples" * examples()) {
    const std::vector<double> errors{0.5, -1.0, 2.0};
    const std::vector<double> unc{0.1, 0.4, 0.3};
    const double overall = std::sqrt((0.25 + 1.0 + 4.0) / 3.0);
    CHECK(rmse_below_uncertainty(errors, unc, std::vector<double>{0.4})[0] == overall);
    CHECK(rmse_below_uncertainty(std::vector<double>{0, 2}, std::vector<double>{1, 10}, std::vector<double>{5})[0] ==
          0.0);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> e(300), s(300);
    for (std::size_t i = 0; i < e.size(); ++i) {
        s[i] = u(rng);
        e[i] = s[i] * s[i];
    }
    std::vector<double> thresholds;
    for (int k = 1; k <= 20; ++k) thresholds.push_back(0.05 * k);
    const auto curve = rmse_below_uncertainty(e, s, thresholds);
    for (std::size_t k = 1; k < curve.size(); ++k) CHECK(curve[k] >= curve[k - 1]);
}

TEST_CASE("rmse below uncertainty marks empty buckets") {
    const auto r = rmse_below_uncertainty(std::vector<double>{1.0}, std::vector<double>{5.0}, std::vector<double>{1.0, 6.0});
    CHECK(std::isnan(r[0]));
    CHECK(r[1] == 1.0);
    CHECK_THROWS_CODE(rmse_below_uncertainty(std::vector<double>{1.0}, std::vector<double>{}, std::vector<double>{}),
                      Errc::DimMismatch);
}

TEST_CASE("discrete entropy examples" * examples()) {
    CHECK(std::abs(discrete_entropy(std::vector<double>{0.5, 0.5}) - std::log(2.0)) < 1e-15);
    CHECK(discrete_entropy(std::vector<double>{1.0, 0.0}) == 0.0);
    CHECK(std::abs(discrete_entropy(std::vector<double>{0.731059, 0.268941}) - 0.582203) < 1e-6);
    CHECK_THROWS_CODE(discrete_entropy(std::vector<double>{0.5, 0.6}), Errc::NotNormalized);
    CHECK_THROWS_CODE(discrete_entropy(std::vector<double>{1.5, -0.5}), Errc::NotNormalized);
}

TEST_CASE("discrete entropy is maximal at the uniform distribution") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> eps(-0.05, 0.05);
    for (std::size_t k = 2; k <= 8; ++k) {
        const double hmax = std::log(static_cast<double>(k));
        const std::vector<double> uniform(k, 1.0 / static_cast<double>(k));
        CHECK(std::abs(discrete_entropy(uniform) - hmax) < 1e-14);
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> p(k);
            double total = 0.0;
            for (double& v : p) total += (v = 1.0 / static_cast<double>(k) + eps(rng) / static_cast<double>(k));
            for (double& v : p) v /= total;
            CHECK(discrete_entropy(p) <= hmax + 1e-15);
        }
    }
}

TEST_CASE("entropy of a deterministic function never exceeds the entropy of its argument") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::size_t> size(1, 12);
    std::exponential_distribution<double> mass(1.0);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = size(rng);
        std::vector<double> p(n);
        double total = 0.0;
        for (double& v : p) total += (v = mass(rng));
        for (double& v : p) v /= total;
        std::uniform_int_distribution<std::size_t> image(0, n - 1);
        std::vector<double> q(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) q[image(rng)] += p[i];
        CHECK(discrete_entropy(q) <= discrete_entropy(p) + 1e-12);
        CHECK(std::abs(discrete_entropy(p) - oracle::plugin_entropy(p)) < 1e-15);
    }
}
