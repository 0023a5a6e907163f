#pragma once

// Distributions over model outputs p(ŷ): categorical for class predictions,
// and uniform / beta-prime / histogram densities for scalar regression outputs.

#include "luq/linalg.hpp"

#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace luq {

struct CategoricalPrior {
    std::vector<int> classes;  // ascending
    Vector log_probs;

    bool operator==(const CategoricalPrior&) const = default;
};

struct UniformPrior {
    double lo = -10.0;
    double hi = 10.0;

    bool operator==(const UniformPrior&) const = default;
};

// Density x^(α-1) (1+x)^(-α-β) / B(α, β) on x > 0.
struct BetaPrimePrior {
    double alpha = 1.0;
    double beta = 1.0;

    bool operator==(const BetaPrimePrior&) const = default;
};

struct HistogramPrior {
    Vector edges;         // strictly increasing, bins = edges.size() - 1
    Vector log_density;   // per bin; densities integrate to 1

    bool operator==(const HistogramPrior&) const = default;
};

using OutputPrior = std::variant<CategoricalPrior, UniformPrior, BetaPrimePrior, HistogramPrior>;

// count_k / n over the classes seen in the labels. When `declared_classes`
// names a class absent from the labels, every class gets (count + smoothing)
// / (n + K·smoothing) instead.
CategoricalPrior fit_categorical(std::span<const int> predicted_labels,
                                 std::span<const int> declared_classes = {}, double smoothing = 1.0);

UniformPrior make_uniform(double lo, double hi);
BetaPrimePrior make_betaprime(double alpha, double beta);
HistogramPrior fit_histogram(std::span<const double> samples, std::size_t bins);

// Log mass (categorical) or log density (continuous). Outside the support,
// or for an unknown class, returns -inf.
double prior_log_pdf(const OutputPrior& p, double y);
double prior_log_pmf(const CategoricalPrior& p, int cls);

// Support interval of a continuous prior; nullopt for categorical.
// Beta-prime reports (0, +inf).
std::optional<std::pair<double, double>> prior_support(const OutputPrior& p);

struct BetaPrimeMoments {
    double mean = 0.0;
    double variance = 0.0;
};

// Mean α/(β-1) and variance α(α+β-1)/((β-2)(β-1)²); requires β > 2.
BetaPrimeMoments betaprime_moments(double alpha, double beta);

struct SampleMoments {
    double mean = 0.0;
    double variance = 0.0;  // n-1 denominator
};

SampleMoments sample_moments(std::span<const double> samples);

// Method-of-moments inversion: β = 2 + m(m+1)/v, α = m(β-1).
// Throws Errc::MomentInversionFailed when the moments do not admit a
// finite-variance beta-prime.
BetaPrimePrior betaprime_fit_mom(std::span<const double> samples);

}  // namespace luq
