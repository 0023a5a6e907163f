#pragma once

#include "luq/linalg.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace luq {

struct GaussianComponent {
    double log_weight = 0.0;
    Vector mean;
    CholeskyFactor cov_chol;

    bool operator==(const GaussianComponent&) const = default;
};

struct Gmm {
    std::size_t dim = 0;
    std::vector<GaussianComponent> components;

    bool operator==(const Gmm&) const = default;
};

enum class CovarianceMode { FullPerComponent, TiedAcrossComponents };

struct EmOptions {
    std::size_t n_components = 1;
    std::size_t max_iter = 200;
    double tol = 1e-6;        // relative objective change
    double cov_reg = 1e-6;    // added to every covariance diagonal
    CovarianceMode covariance_mode = CovarianceMode::FullPerComponent;
    std::uint64_t seed = 0;
};

struct EmResult {
    Gmm model;
    // Mean per-row training objective after initialization and after every
    // M-step. With cov_reg = ε each component density is weighted by
    // exp(-ε/2·tr Σ⁻¹), which makes the ε-regularized M-step an exact EM step,
    // so this sequence is non-decreasing (up to rounding). It equals the
    // plain mean log-likelihood when ε = 0.
    std::vector<double> objective_history;
    // Indices into objective_history that immediately follow a component re-seed.
    std::vector<std::size_t> reseed_points;
    std::size_t iterations = 0;
    bool converged = false;
};

EmResult em_fit(const Matrix& data, const EmOptions& opts);

double gmm_log_prob(const Gmm& g, std::span<const double> z);
Vector gmm_log_prob(const Gmm& g, const Matrix& z);

struct ClassConditionalGmm {
    std::size_t dim = 0;
    std::map<int, Gmm> per_class;
    std::vector<int> classes;  // ascending

    const Gmm& at(int cls) const;
    bool operator==(const ClassConditionalGmm&) const = default;
};

struct ClassFitOptions {
    // Reduce the component count of classes with fewer rows than
    // n_components to max(1, rows/2) instead of failing with ClassTooSmall.
    bool shrink_small_classes = true;
};

struct ClassFitReport {
    int cls = 0;
    std::size_t count = 0;
    std::size_t components = 0;
    double final_objective = 0.0;
    std::size_t iterations = 0;
};

ClassConditionalGmm fit_class_conditional(const Matrix& features, std::span<const int> predicted_labels,
                                          const EmOptions& opts, ClassFitOptions policy = {},
                                          std::vector<ClassFitReport>* reports = nullptr);

}  // namespace luq
