#pragma once

// Scoring of latent vectors. Epistemic uncertainty is the surprisal
// -log p(z), with p(z) obtained by marginalizing p(z|ŷ)p(ŷ) over outputs
// (a sum over classes, or trapezoid quadrature over a support grid).
// Aleatoric uncertainty is the entropy of the Bayes posterior p(ŷ|z).
// All mixing of log-densities and log-priors is max-shifted.

#include "luq/flow.hpp"
#include "luq/gmm.hpp"
#include "luq/priors.hpp"

#include <optional>
#include <vector>

namespace luq {

struct SupportGrid {
    Vector points;   // strictly increasing, equidistant
    double spacing = 0.0;

    std::size_t size() const noexcept { return points.size(); }
    bool operator==(const SupportGrid&) const = default;
};

// n equidistant points spanning [lo, hi] inclusive.
SupportGrid make_grid(double lo, double hi, std::size_t n);
SupportGrid make_grid_with_spacing(double lo, double hi, double spacing);

// Trapezoid weights: spacing inside, spacing/2 at both ends.
Vector trapezoid_weights(const SupportGrid& grid);
double trapezoid(const SupportGrid& grid, std::span<const double> values);

// -log Σ exp(log_joint); +inf when every entry is -inf.
double surprisal_from_log_joint(std::span<const double> log_joint);

// Posterior p_k ∝ exp(log_joint_k), normalized in log space.
Vector posterior_from_log_joint(std::span<const double> log_joint);

double shannon_entropy_nats(std::span<const double> probs);

struct ClassPosterior {
    double entropy = 0.0;  // nats, in [0, log K]
    std::vector<int> classes;
    Vector probs;
};

// log p(z|k) + log p(k) for every class of the prior; throws MissingClassDensity
// when the prior names a class without a fitted density.
Vector class_log_joint(const ClassConditionalGmm& d, const CategoricalPrior& p, std::span<const double> z);

double epistemic_classification(const ClassConditionalGmm& d, const CategoricalPrior& p, std::span<const double> z);
ClassPosterior aleatoric_classification(const ClassConditionalGmm& d, const CategoricalPrior& p,
                                        std::span<const double> z);

struct GridPosterior {
    SupportGrid grid;
    Vector density;          // renormalized so the trapezoid integral is 1
    double prior_mass = 0;   // trapezoid integral of the prior over the grid
};

struct RegressionScore {
    double epistemic = 0.0;  // -log p(z)
    double aleatoric = 0.0;  // differential entropy of p(y|z); may be negative
    GridPosterior posterior;
};

// Evaluates the flow once per grid point and derives both scores.
RegressionScore score_regression(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                                 std::span<const double> z);

double epistemic_regression(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                            std::span<const double> z);
RegressionScore aleatoric_regression(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                                     std::span<const double> z);

// |epistemic(grid) - epistemic(grid with halved spacing)|. Emits a
// GridTooCoarse warning when the change exceeds `tolerance`.
double grid_refinement_delta(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                             std::span<const double> z, double tolerance = 1e-3);

struct ConfidenceRegion {
    double lower = 0.0;
    double upper = 0.0;
    double mass = 0.0;  // accumulated posterior mass inside
};

// Grows an interval around the prediction one grid step at a time,
// alternating upward and downward (skipping an exhausted side), until the
// accumulated trapezoid mass reaches `mass`. The bounds are the outer edges
// of the accumulated cells (half a spacing past the last points). Throws MassUnreachable when the
// grid holds less than the requested mass.
ConfidenceRegion confidence_region(const GridPosterior& posterior, double prediction, double mass);

struct UncertaintyScores {
    Vector epistemic;
    Vector aleatoric;
    std::vector<Vector> posterior;  // empty unless requested
};

UncertaintyScores score_classification(const ClassConditionalGmm& d, const CategoricalPrior& p, const Matrix& z,
                                       bool keep_posterior = false);
UncertaintyScores score_regression(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                                   const Matrix& z, bool keep_posterior = false);

}  // namespace luq
