// Acceptance runner: one PASS/FAIL line per criterion, with wall time and the
// measured numbers behind the verdict. Exit status is non-zero when any
// criterion fails.

#include "luq/flow.hpp"
#include "luq/gmm.hpp"
#include "luq/io.hpp"
#include "luq/log.hpp"
#include "luq/metrics.hpp"
#include "luq/pipeline.hpp"
#include "luq/priors.hpp"
#include "luq/uncertainty.hpp"

#include "../common/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

using namespace luq;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (double& v : m.data()) v = n(rng);
    return m;
}

int run_process(const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------- 1

Verdict unit_oracles(double& seconds) {
    const auto t0 = std::chrono::steady_clock::now();
    const int code = run_process(std::string(LUQ_UNIT_TESTS_PATH) + " --test-suite=examples");
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {code == 0 && seconds < 10.0, fmt("examples suite exit %d in %.2f s (budget 10 s)", code, seconds)};
}

// ---------------------------------------------------------------- 2

FlowArchitecture arch(std::size_t dim, std::size_t layers) {
    FlowArchitecture a;
    a.dim = dim;
    a.cond_dim = 1;
    a.n_layers = layers;
    a.hidden_width = 8;
    a.cond_hidden = 5;
    a.cond_embed = 3;
    return a;
}

Verdict flow_suite(double&) {
    std::mt19937_64 rng(2024);
    double worst_inv = 0.0, worst_logdet = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const ConditionalFlow f = oracle::random_flow(arch(1 + s % 5, 2 + s % 3), 1000 + s, 0.8);
        Vector z(f.dim);
        for (double& v : z) v = std::normal_distribution<double>(0.0, 3.0)(rng);
        const Vector c{std::normal_distribution<double>(0.0, 2.0)(rng)};
        const CouplingResult fw = flow_forward(f, z, c);
        const CouplingResult bw = flow_inverse(f, fw.u, c);
        for (std::size_t k = 0; k < z.size(); ++k) worst_inv = std::max(worst_inv, std::abs(bw.u[k] - z[k]));
        worst_logdet = std::max(worst_logdet, std::abs(fw.log_det + bw.log_det));
    }

    double mass_lo = 2.0, mass_hi = 0.0;
    for (std::uint64_t s = 0; s < 4; ++s) {
        const double m1 = oracle::flow_mass_1d(oracle::random_flow(arch(1, 3), 2000 + s, 0.3), 0.7 - 0.4 * s,
                                               -10.0, 10.0, 4001);
        const double m2 =
            oracle::flow_mass_2d(oracle::random_flow(arch(2, 3), 3000 + s, 0.3), -0.5 + 0.3 * s, -10.0, 10.0, 301);
        mass_lo = std::min({mass_lo, m1, m2});
        mass_hi = std::max({mass_hi, m1, m2});
    }

    const std::size_t draws = 24;
    double worst_grad = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (std::uint64_t s = 0; s < draws; ++s) {
        const std::size_t dim = 1 + s % 3;
        const ConditionalFlow f = oracle::random_flow(arch(dim, 2 + s % 2), 4000 + s);
        const Matrix z = random_matrix(5, dim, rng);
        const Matrix c = random_matrix(5, 1, rng);
        const oracle::GradCheck g = oracle::flow_gradient_check(f, z, c);
        worst_grad = std::max(worst_grad, g.max_rel_error);
        checked += g.checked;
        skipped += g.skipped;
    }

    const bool pass = worst_inv < 1e-9 && worst_logdet < 1e-10 && mass_lo >= 0.99 && mass_hi <= 1.001 &&
                      worst_grad < 1e-4 && checked > skipped;
    return {pass, fmt("inverse err %.2e, log-det sum %.2e, mass [%.5f, %.5f], gradient rel err %.2e over %zu draws "
                      "(%zu entries, %zu at ReLU kinks skipped)",
                      worst_inv, worst_logdet, mass_lo, mass_hi, worst_grad, draws, checked, skipped)};
}

// ---------------------------------------------------------------- 3

Verdict em_monotone(double&) {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> dim(1, 8), comps(1, 4), size(50, 500);
    const auto sink = set_warning_sink([](std::string_view) {});
    std::size_t ok = 0, reseeded = 0, iterations = 0;
    double worst_drop = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t d = dim(rng), k = comps(rng), n = size(rng);
        // clustered data so the mixture has structure to find
        const Matrix centers = random_matrix(k, d, rng, 4.0);
        Matrix x = random_matrix(n, d, rng);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) x(i, j) += centers(i % k, j);
        EmOptions o;
        o.n_components = k;
        o.seed = static_cast<std::uint64_t>(rep);
        o.covariance_mode = rep % 2 ? CovarianceMode::TiedAcrossComponents : CovarianceMode::FullPerComponent;
        const EmResult r = em_fit(x, o);
        const auto& h = r.objective_history;
        bool mono = true;
        for (std::size_t i = 1; i < h.size(); ++i) {
            if (std::find(r.reseed_points.begin(), r.reseed_points.end(), i) != r.reseed_points.end()) continue;
            worst_drop = std::max(worst_drop, h[i - 1] - h[i]);
            if (h[i] < h[i - 1] - 1e-8) mono = false;
        }
        ok += mono;
        reseeded += !r.reseed_points.empty();
        iterations += r.iterations;
    }
    set_warning_sink(sink);
    return {ok == 50, fmt("%zu/50 datasets non-decreasing, largest per-step drop %.2e, %zu EM steps, %zu runs "
                          "with a component re-seed",
                          ok, worst_drop, iterations, reseeded)};
}

// ---------------------------------------------------------------- 4

Verdict toy_regression(double&) {
    std::size_t gap_ok = 0, ens_ok = 0, seeds_covered = 0, covered = 0, points = 0;
    double min_cover = 1.0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ToyRegressionConfig cfg;
        cfg.seed = seed;
        const ToyRegressionResult r = run_toy_regression(cfg);
        gap_ok += r.mean_epistemic_gap > r.mean_epistemic_train;
        ens_ok += r.ensemble_epistemic_gap > r.ensemble_epistemic_train;
        for (std::size_t i = 0; i < r.eval_x.size(); ++i) {
            if (r.in_gap[i]) continue;
            ++points;
            covered += r.lower[i] <= r.truth[i] && r.truth[i] <= r.upper[i];
        }
        seeds_covered += r.band_coverage >= 0.9;
        min_cover = std::min(min_cover, r.band_coverage);
        per_seed += fmt(" %.1f/%.1f", r.mean_epistemic_gap, r.mean_epistemic_train);
    }
    // coverage counts training-region grid points over the whole ten-seed run
    const double coverage = static_cast<double>(covered) / static_cast<double>(points);
    return {gap_ok >= 9 && ens_ok >= 9 && coverage >= 0.9,
            fmt("gap > train in %zu/10 seeds, ensemble ordering in %zu/10, band holds f(x) at %.3f of %zu "
                "training-region points (per seed: >= 0.9 in %zu/10, min %.3f); mean epistemic gap/train nats:%s",
                gap_ok, ens_ok, coverage, points, seeds_covered, min_cover, per_seed.c_str())};
}

// ---------------------------------------------------------------- 5-7

const ToyClassificationResult& classification_seed0() {
    static const ToyClassificationResult r = [] {
        ToyClassificationConfig cfg;
        cfg.seed = 0;
        return run_toy_classification(cfg);
    }();
    return r;
}

Verdict toy_ood(double&) {
    const ToyClassificationResult& r = classification_seed0();
    const NoiseSweepPoint& s4 = r.noise_sweep.back();
    return {r.ood_auroc >= 0.99 && s4.sigma == 4.0 && s4.auroc >= 0.95,
            fmt("shifted-blob AUROC %.4f (ensemble baseline %.4f), noise sigma 4 AUROC %.4f, accuracy %.4f",
                r.ood_auroc, r.ensemble_ood_auroc, s4.auroc, r.accuracy)};
}

Verdict sweep_monotone(double&) {
    const auto& sweep = classification_seed0().noise_sweep;
    std::size_t inversions = 0;
    double worst = 0.0;
    std::string values;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        values += fmt(" %.1f:%.4f", sweep[i].sigma, sweep[i].auroc);
        if (i > 0 && sweep[i].auroc < sweep[i - 1].auroc) {
            ++inversions;
            worst = std::max(worst, sweep[i - 1].auroc - sweep[i].auroc);
        }
    }
    return {sweep.size() == 4 && inversions <= 1 && worst <= 0.02,
            fmt("AUROC by sigma%s; %zu inversions (largest %.4f)", values.c_str(), inversions, worst)};
}

Verdict calibration(double&) {
    ToyClassificationConfig cfg;
    cfg.seed = 0;
    cfg.data.sigma = 0.8;
    cfg.ensemble_members = 0;
    const ToyClassificationResult r = run_toy_classification(cfg);
    const double last = r.calibration.accuracy.back();
    return {r.lowest_decile_accuracy >= r.accuracy && last == r.accuracy && r.calibration.percentiles.back() == 100.0,
            fmt("lowest-aleatoric decile accuracy %.4f vs overall %.4f; curve ends at %.17g (overall %.17g)",
                r.lowest_decile_accuracy, r.accuracy, last, r.accuracy)};
}

// ---------------------------------------------------------------- 8

Verdict quadrature(double&) {
    const ConditionalFlow f = oracle::gaussian_location_flow(1.0);
    const double e = epistemic_regression(f, make_uniform(-10.0, 10.0), make_grid(-10.0, 10.0, 1000), Vector{0.0});
    const double target = std::log(20.0);
    return {std::abs(e - target) < 1e-4, fmt("epistemic %.9f vs log 20 = %.9f (diff %.2e)", e, target, e - target)};
}

// ---------------------------------------------------------------- 9

Verdict metric_oracles(double&) {
    std::mt19937_64 rng(9);
    std::size_t auroc_ok = 0, ap_ok = 0, fpr_ok = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        const ScoredBinarySet s = oracle::random_binary_set(rng);
        auroc_ok += auroc(s) == oracle::auroc_pairs(s);
        ap_ok += std::abs(average_precision(s) - oracle::average_precision_thresholds(s)) < 1e-12;
        fpr_ok += fpr_at_tpr(s) == oracle::fpr_at_tpr_thresholds(s, 0.95);
    }
    return {auroc_ok == 1000 && ap_ok == 1000 && fpr_ok == 1000,
            fmt("AUROC exact %zu/1000, AP %zu/1000, FPR95 %zu/1000 (n <= 8, tied scores)", auroc_ok, ap_ok, fpr_ok)};
}

// ---------------------------------------------------------------- 10

Verdict data_processing(double&) {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<std::size_t> size(2, 12);
    std::exponential_distribution<double> weight(1.0);
    std::size_t ok = 0;
    double tightest = 1e300;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = size(rng);
        std::vector<double> p(n);
        double total = 0.0;
        for (double& v : p) total += (v = weight(rng));
        for (double& v : p) v /= total;
        std::uniform_int_distribution<std::size_t> image(0, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
        std::vector<double> q(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) q[image(rng)] += p[i];
        const double slack = discrete_entropy(p) - discrete_entropy(q);
        tightest = std::min(tightest, slack);
        ok += slack >= -1e-12;
    }
    return {ok == 100, fmt("H(f(X)) <= H(X) + 1e-12 in %zu/100 cases, smallest H(X) - H(f(X)) = %.3e", ok, tightest)};
}

// ---------------------------------------------------------------- 11

Verdict end_to_end(double&) {
    const fs::path root = fs::temp_directory_path() / ("luq-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string cli = LUQ_CLI_PATH;
    const int a = run_process(cli + " toy regression --seed 7 --out " + (root / "a").string());
    const int b = run_process(cli + " toy regression --seed 7 --out " + (root / "b").string());
    Verdict v;
    if (a != 0 || b != 0) {
        v.detail = fmt("toy runs exited %d and %d", a, b);
    } else {
        const std::string sa = read_file(root / "a" / "scores.csv");
        const std::string sb = read_file(root / "b" / "scores.csv");
        const std::string model = read_file(root / "a" / "model.luqm");
        const bool model_rt = encode_model(decode_model(model)) == model;
        const std::string latents = read_file(root / "a" / "latents.luq");
        const bool matrix_rt = encode_matrix(decode_matrix(latents)) == latents;
        v.pass = sa == sb && !sa.empty() && model_rt && matrix_rt &&
                 read_file(root / "a" / "model.luqm") == read_file(root / "b" / "model.luqm");
        v.detail = fmt("scores.csv %s (%zu bytes), model file %s, model re-encode %s, latent matrix re-encode %s",
                       sa == sb ? "identical" : "differs", sa.size(),
                       read_file(root / "b" / "model.luqm") == model ? "identical" : "differs",
                       model_rt ? "bit-identical" : "differs", matrix_rt ? "bit-identical" : "differs");
    }
    fs::remove_all(root);
    return v;
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0 = none
    std::function<Verdict(double&)> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "analytic unit oracles", 10.0, unit_oracles},
        {2, "flow correctness", 60.0, flow_suite},
        {3, "EM monotonicity", 60.0, em_monotone},
        {4, "toy regression gap uncertainty", 300.0, toy_regression},
        {5, "toy classification OOD", 120.0, toy_ood},
        {6, "perturbation sweep monotonicity", 120.0, sweep_monotone},
        {7, "aleatoric calibration", 0.0, calibration},
        {8, "epistemic regression quadrature", 0.0, quadrature},
        {9, "metric oracle equivalence", 0.0, metric_oracles},
        {10, "data-processing inequality", 0.0, data_processing},
        {11, "end-to-end determinism", 0.0, end_to_end},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        double reported = -1.0;
        Verdict v;
        try {
            v = c.run(reported);
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double t = reported >= 0.0 ? reported : wall;
        if (c.budget_s > 0.0 && t >= c.budget_s) {
            v.pass = false;
            v.detail += fmt(" [over the %.0f s budget]", c.budget_s);
        }
        failures += !v.pass;
        std::printf("%s criterion %2d %-34s %7.2f s  %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, t,
                    v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
