#include "luq/uncertainty.hpp"

#include "luq/error.hpp"
#include "luq/log.hpp"
#include "luq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace luq {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double log_integral(std::span<const double> log_values, const Vector& log_weights) {
    double hi = -kInf;
    for (std::size_t i = 0; i < log_values.size(); ++i) hi = std::max(hi, log_values[i] + log_weights[i]);
    if (hi == -kInf) return -kInf;
    double s = 0.0;
    for (std::size_t i = 0; i < log_values.size(); ++i) {
        const double v = log_values[i] + log_weights[i];
        if (v != -kInf) s += std::exp(v - hi);
    }
    return hi + std::log(s);
}

Vector grid_log_joint(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                      std::span<const double> z) {
    if (f.cond_dim != 1) fail(Errc::DimMismatch, "regression scoring needs a flow with scalar condition");
    if (z.size() != f.dim) {
        fail(Errc::DimMismatch, "regression scoring: latent length " + std::to_string(z.size()) +
                                    ", flow dim " + std::to_string(f.dim));
    }
    const std::size_t n = grid.size();
    Matrix zs(n, f.dim);
    for (std::size_t i = 0; i < n; ++i) std::copy(z.begin(), z.end(), zs.row(i).begin());
    const Matrix cs = Matrix::column(grid.points);
    Vector out = flow_log_prob(f, zs, cs);
    for (std::size_t i = 0; i < n; ++i) out[i] += prior_log_pdf(p, grid.points[i]);
    return out;
}

}  // namespace

SupportGrid make_grid(double lo, double hi, std::size_t n) {
    if (n < 2) fail(Errc::InvalidArgument, "support grid needs at least 2 points");
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        fail(Errc::InvalidArgument, "support grid needs finite lo < hi");
    }
    SupportGrid g;
    g.spacing = (hi - lo) / static_cast<double>(n - 1);
    g.points.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.points[i] = lo + g.spacing * static_cast<double>(i);
    g.points.back() = hi;
    return g;
}

SupportGrid make_grid_with_spacing(double lo, double hi, double spacing) {
    if (!(spacing > 0.0)) fail(Errc::InvalidArgument, "grid spacing must be positive");
    const auto steps = static_cast<std::size_t>(std::llround((hi - lo) / spacing));
    return make_grid(lo, lo + spacing * static_cast<double>(steps), steps + 1);
}

Vector trapezoid_weights(const SupportGrid& grid) {
    Vector w(grid.size(), grid.spacing);
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

double trapezoid(const SupportGrid& grid, std::span<const double> values) {
    if (values.size() != grid.size()) fail(Errc::DimMismatch, "trapezoid: value count differs from grid");
    const Vector w = trapezoid_weights(grid);
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += w[i] * values[i];
    return s;
}

double surprisal_from_log_joint(std::span<const double> log_joint) {
    if (log_joint.empty()) fail(Errc::EmptyInput, "surprisal: no classes");
    if (std::all_of(log_joint.begin(), log_joint.end(), [](double v) { return v == -kInf; })) return kInf;
    return -logsumexp(log_joint);
}

Vector posterior_from_log_joint(std::span<const double> log_joint) {
    const double norm = logsumexp(log_joint);
    Vector out(log_joint.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_joint[i] - norm);
    return out;
}

double shannon_entropy_nats(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return std::max(h, 0.0);
}

Vector class_log_joint(const ClassConditionalGmm& d, const CategoricalPrior& p, std::span<const double> z) {
    if (z.size() != d.dim) {
        fail(Errc::DimMismatch, "classification scoring: latent length " + std::to_string(z.size()) +
                                    ", density dim " + std::to_string(d.dim));
    }
    Vector out(p.classes.size());
    for (std::size_t k = 0; k < p.classes.size(); ++k) {
        out[k] = gmm_log_prob(d.at(p.classes[k]), z) + p.log_probs[k];
    }
    return out;
}

double epistemic_classification(const ClassConditionalGmm& d, const CategoricalPrior& p, std::span<const double> z) {
    return surprisal_from_log_joint(class_log_joint(d, p, z));
}

ClassPosterior aleatoric_classification(const ClassConditionalGmm& d, const CategoricalPrior& p,
                                        std::span<const double> z) {
    const Vector joint = class_log_joint(d, p, z);
    ClassPosterior out;
    out.classes = p.classes;
    out.probs = posterior_from_log_joint(joint);
    out.entropy = std::min(shannon_entropy_nats(out.probs), std::log(static_cast<double>(joint.size())));
    return out;
}

RegressionScore score_regression(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                                 std::span<const double> z) {
    const Vector joint = grid_log_joint(f, p, grid, z);
    const Vector w = trapezoid_weights(grid);
    Vector log_w(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) log_w[i] = std::log(w[i]);

    RegressionScore out;
    out.posterior.grid = grid;
    Vector prior_density(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) prior_density[i] = std::exp(prior_log_pdf(p, grid.points[i]));
    out.posterior.prior_mass = trapezoid(grid, prior_density);

    const double log_evidence = log_integral(joint, log_w);
    out.epistemic = -log_evidence;
    out.posterior.density.assign(grid.size(), 0.0);
    if (log_evidence == -kInf) {
        out.aleatoric = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    double h = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (joint[i] == -kInf) continue;
        const double log_q = joint[i] - log_evidence;
        const double q = std::exp(log_q);
        out.posterior.density[i] = q;
        h -= w[i] * q * log_q;
    }
    out.aleatoric = h;
    return out;
}

double epistemic_regression(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                            std::span<const double> z) {
    const Vector joint = grid_log_joint(f, p, grid, z);
    const Vector w = trapezoid_weights(grid);
    Vector log_w(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) log_w[i] = std::log(w[i]);
    return -log_integral(joint, log_w);
}

RegressionScore aleatoric_regression(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                                     std::span<const double> z) {
    return score_regression(f, p, grid, z);
}

double grid_refinement_delta(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                             std::span<const double> z, double tolerance) {
    const SupportGrid fine = make_grid(grid.points.front(), grid.points.back(), 2 * grid.size() - 1);
    const double delta = std::abs(epistemic_regression(f, p, grid, z) - epistemic_regression(f, p, fine, z));
    if (delta > tolerance) {
        warn("GridTooCoarse: halving the grid spacing changed the epistemic score by " + std::to_string(delta));
    }
    return delta;
}

ConfidenceRegion confidence_region(const GridPosterior& posterior, double prediction, double mass) {
    const SupportGrid& grid = posterior.grid;
    if (!(mass > 0.0 && mass < 1.0)) fail(Errc::InvalidArgument, "confidence_region: mass must lie in (0, 1)");
    if (grid.size() < 2 || posterior.density.size() != grid.size()) {
        fail(Errc::DimMismatch, "confidence_region: posterior does not match its grid");
    }
    if (prediction < grid.points.front() || prediction > grid.points.back()) {
        fail(Errc::InvalidArgument, "confidence_region: prediction outside the grid");
    }
    const Vector w = trapezoid_weights(grid);
    double total = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) total += w[i] * posterior.density[i];
    constexpr double slack = 1e-12;
    if (total < mass - slack) {
        fail(Errc::MassUnreachable, "confidence_region: grid holds mass " + std::to_string(total) +
                                        " < requested " + std::to_string(mass));
    }

    const auto nearest = static_cast<std::size_t>(
        std::clamp(std::llround((prediction - grid.points.front()) / grid.spacing), 0LL,
                   static_cast<long long>(grid.size() - 1)));
    std::size_t lo = nearest;
    std::size_t hi = nearest;
    double acc = w[nearest] * posterior.density[nearest];
    bool up_next = true;
    while (acc < mass - slack) {
        const bool can_up = hi + 1 < grid.size();
        const bool can_down = lo > 0;
        if (!can_up && !can_down) break;
        const bool go_up = (up_next && can_up) || !can_down;
        if (go_up) {
            ++hi;
            acc += w[hi] * posterior.density[hi];
        } else {
            --lo;
            acc += w[lo] * posterior.density[lo];
        }
        up_next = !go_up;
    }
    // each trapezoid weight is the mass of the cell reaching half a spacing
    // beyond its point, clipped at the grid ends
    const double half = 0.5 * grid.spacing;
    const double lower = std::max(grid.points[lo] - half, grid.points.front());
    const double upper = std::min(grid.points[hi] + half, grid.points.back());
    return {std::min(lower, prediction), std::max(upper, prediction), acc};
}

UncertaintyScores score_classification(const ClassConditionalGmm& d, const CategoricalPrior& p, const Matrix& z,
                                       bool keep_posterior) {
    UncertaintyScores out;
    const std::size_t n = z.rows();
    out.epistemic.resize(n);
    out.aleatoric.resize(n);
    if (keep_posterior) out.posterior.resize(n);
    parallel_for(n, [&](std::size_t i) {
        const Vector joint = class_log_joint(d, p, z.row(i));
        out.epistemic[i] = surprisal_from_log_joint(joint);
        Vector post = posterior_from_log_joint(joint);
        out.aleatoric[i] = std::min(shannon_entropy_nats(post), std::log(static_cast<double>(joint.size())));
        if (keep_posterior) out.posterior[i] = std::move(post);
    });
    return out;
}

UncertaintyScores score_regression(const ConditionalFlow& f, const OutputPrior& p, const SupportGrid& grid,
                                   const Matrix& z, bool keep_posterior) {
    UncertaintyScores out;
    const std::size_t n = z.rows();
    out.epistemic.resize(n);
    out.aleatoric.resize(n);
    if (keep_posterior) out.posterior.resize(n);
    parallel_for(n, [&](std::size_t i) {
        RegressionScore s = score_regression(f, p, grid, z.row(i));
        out.epistemic[i] = s.epistemic;
        out.aleatoric[i] = s.aleatoric;
        if (keep_posterior) out.posterior[i] = std::move(s.posterior.density);
    });
    return out;
}

}  // namespace luq
