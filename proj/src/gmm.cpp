#include "luq/gmm.hpp"

#include "luq/error.hpp"
#include "luq/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace luq {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2π)
constexpr double kDegenerateMass = 1e-10;

double component_log_density(const GaussianComponent& c, std::span<const double> z, Vector& diff) {
    const std::size_t d = c.mean.size();
    for (std::size_t j = 0; j < d; ++j) diff[j] = z[j] - c.mean[j];
    return -0.5 * static_cast<double>(d) * kLog2Pi - 0.5 * log_det(c.cov_chol) -
           0.5 * mahalanobis_sq(c.cov_chol, diff);
}

// tr(Σ⁻¹) = ‖L⁻¹‖²_F
double inverse_trace(const CholeskyFactor& f) {
    const std::size_t d = f.dim();
    const Matrix& l = f.lower();
    double total = 0.0;
    Vector col(d);
    for (std::size_t j = 0; j < d; ++j) {
        // column j of L⁻¹ has zeros above the diagonal
        for (std::size_t i = 0; i < d; ++i) {
            if (i < j) {
                col[i] = 0.0;
                continue;
            }
            double s = i == j ? 1.0 : 0.0;
            for (std::size_t k = j; k < i; ++k) s -= l(i, k) * col[k];
            col[i] = s / l(i, i);
            total += col[i] * col[i];
        }
    }
    return total;
}

CholeskyFactor regularized_factor(Matrix cov, double reg) {
    for (std::size_t i = 0; i < cov.rows(); ++i) cov(i, i) += reg;
    return cholesky(cov);
}

Matrix global_covariance(const Matrix& data) {
    const std::size_t d = data.cols();
    if (data.rows() < 2) return Matrix(d, d);
    return sample_covariance(data, column_mean(data));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
}

// k-means++ seeding of component means.
std::vector<Vector> seed_means(const Matrix& data, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = data.rows();
    std::vector<Vector> means;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const auto first = data.row(pick(rng));
    means.emplace_back(first.begin(), first.end());
    Vector nearest(n, std::numeric_limits<double>::infinity());
    std::vector<bool> used(n, false);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (means.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(data.row(i), means.back()));
            total += nearest[i];
        }
        std::size_t chosen = n;
        if (total > 0.0) {
            double target = unit(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                target -= nearest[i];
                if (target < 0.0 && nearest[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
            if (chosen == n) {
                for (std::size_t i = n; i-- > 0;)
                    if (nearest[i] > 0.0) {
                        chosen = i;
                        break;
                    }
            }
        } else {
            // every point coincides with an existing mean
            chosen = pick(rng);
        }
        const auto r = data.row(chosen);
        means.emplace_back(r.begin(), r.end());
    }
    return means;
}

struct EStep {
    Matrix log_resp;       // n × k
    Vector row_log_norm;   // per-row log Σ_k
    double objective = 0;  // mean of row_log_norm
};

EStep expectation(const Matrix& data, const Gmm& g, double cov_reg) {
    const std::size_t n = data.rows();
    const std::size_t k = g.components.size();
    EStep e{Matrix(n, k), Vector(n), 0.0};
    Vector penalty(k, 0.0);
    if (cov_reg > 0.0) {
        for (std::size_t c = 0; c < k; ++c)
            penalty[c] = -0.5 * cov_reg * inverse_trace(g.components[c].cov_chol);
    }
    Vector diff(g.dim);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto lr = e.log_resp.row(i);
        for (std::size_t c = 0; c < k; ++c) {
            const auto& comp = g.components[c];
            lr[c] = comp.log_weight + penalty[c] + component_log_density(comp, data.row(i), diff);
        }
        const double norm = logsumexp(lr);
        for (double& v : lr) v -= norm;
        e.row_log_norm[i] = norm;
        total += norm;
    }
    e.objective = total / static_cast<double>(n);
    return e;
}

}  // namespace

EmResult em_fit(const Matrix& data, const EmOptions& opts) {
    const std::size_t n = data.rows();
    const std::size_t d = data.cols();
    const std::size_t k = opts.n_components;
    if (k == 0) fail(Errc::InvalidArgument, "em_fit: n_components must be at least 1");
    if (!(opts.tol > 0.0)) fail(Errc::InvalidArgument, "em_fit: tol must be positive");
    if (opts.cov_reg < 0.0) fail(Errc::InvalidArgument, "em_fit: cov_reg must be non-negative");
    if (n < k) {
        fail(Errc::TooFewSamples, "em_fit: " + std::to_string(n) + " rows for " + std::to_string(k) +
                                      " components");
    }
    if (!data.all_finite()) fail(Errc::InvalidArgument, "em_fit: data contains non-finite values");

    std::mt19937_64 rng(opts.seed);
    const Matrix base_cov = global_covariance(data);
    const CholeskyFactor base_factor = regularized_factor(base_cov, opts.cov_reg);

    EmResult result;
    Gmm& g = result.model;
    g.dim = d;
    for (auto& mean : seed_means(data, k, rng)) {
        g.components.push_back({-std::log(static_cast<double>(k)), std::move(mean), base_factor});
    }

    EStep e = expectation(data, g, opts.cov_reg);
    result.objective_history.push_back(e.objective);
    std::vector<int> reseeds(k, 0);

    for (std::size_t iter = 1; iter <= opts.max_iter; ++iter) {
        // M-step
        Vector mass(k, 0.0);
        Matrix resp(n, k);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < k; ++c) {
                resp(i, c) = std::exp(e.log_resp(i, c));
                mass[c] += resp(i, c);
            }
        }
        bool reseeded = false;
        std::vector<Matrix> scatter(k, Matrix(d, d));
        for (std::size_t c = 0; c < k; ++c) {
            auto& comp = g.components[c];
            if (mass[c] <= kDegenerateMass) {
                if (++reseeds[c] > 2) {
                    fail(Errc::DegenerateComponent,
                         "em_fit: component " + std::to_string(c) + " collapsed after two re-seeds");
                }
                // Re-seed from the row the current model explains worst.
                const std::size_t worst = static_cast<std::size_t>(
                    std::min_element(e.row_log_norm.begin(), e.row_log_norm.end()) - e.row_log_norm.begin());
                const auto r = data.row(worst);
                comp.mean.assign(r.begin(), r.end());
                comp.cov_chol = base_factor;
                comp.log_weight = -std::log(static_cast<double>(n));
                mass[c] = -1.0;
                reseeded = true;
                warn("em_fit: re-seeded degenerate component " + std::to_string(c));
                continue;
            }
            Vector mean(d, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double w = resp(i, c);
                const auto r = data.row(i);
                for (std::size_t j = 0; j < d; ++j) mean[j] += w * r[j];
            }
            for (double& m : mean) m /= mass[c];
            Matrix& s = scatter[c];
            Vector diff(d);
            for (std::size_t i = 0; i < n; ++i) {
                const double w = resp(i, c);
                if (w == 0.0) continue;
                const auto r = data.row(i);
                for (std::size_t j = 0; j < d; ++j) diff[j] = r[j] - mean[j];
                for (std::size_t a = 0; a < d; ++a) {
                    const double wa = w * diff[a];
                    auto srow = s.row(a);
                    for (std::size_t b = 0; b <= a; ++b) srow[b] += wa * diff[b];
                }
            }
            comp.mean = std::move(mean);
        }

        double live_mass = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            if (mass[c] > 0.0) live_mass += mass[c];

        if (opts.covariance_mode == CovarianceMode::TiedAcrossComponents) {
            Matrix pooled(d, d);
            for (std::size_t c = 0; c < k; ++c) {
                if (mass[c] <= 0.0) continue;
                for (std::size_t a = 0; a < d; ++a)
                    for (std::size_t b = 0; b <= a; ++b) pooled(a, b) += scatter[c](a, b);
            }
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = 0; b <= a; ++b) {
                    pooled(a, b) /= live_mass;
                    pooled(b, a) = pooled(a, b);
                }
            const CholeskyFactor shared = regularized_factor(std::move(pooled), opts.cov_reg);
            for (auto& comp : g.components) comp.cov_chol = shared;
        } else {
            for (std::size_t c = 0; c < k; ++c) {
                if (mass[c] <= 0.0) continue;
                Matrix& s = scatter[c];
                for (std::size_t a = 0; a < d; ++a)
                    for (std::size_t b = 0; b <= a; ++b) {
                        s(a, b) /= mass[c];
                        s(b, a) = s(a, b);
                    }
                g.components[c].cov_chol = regularized_factor(std::move(s), opts.cov_reg);
            }
        }

        // weights: live components share the data mass; re-seeded ones keep 1/n
        double reseeded_weight = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            if (mass[c] < 0.0) reseeded_weight += 1.0 / static_cast<double>(n);
        for (std::size_t c = 0; c < k; ++c) {
            if (mass[c] < 0.0) continue;
            g.components[c].log_weight = std::log(mass[c] / live_mass * (1.0 - reseeded_weight));
        }

        const double previous = e.objective;
        e = expectation(data, g, opts.cov_reg);
        result.objective_history.push_back(e.objective);
        result.iterations = iter;
        if (!std::isfinite(e.objective)) {
            fail(Errc::DegenerateComponent, "em_fit: training objective became non-finite");
        }
        if (reseeded) {
            result.reseed_points.push_back(result.objective_history.size() - 1);
            continue;
        }
        if (e.objective - previous < opts.tol * std::max(std::abs(previous), 1.0)) {
            result.converged = true;
            break;
        }
    }
    return result;
}

double gmm_log_prob(const Gmm& g, std::span<const double> z) {
    if (z.size() != g.dim) {
        fail(Errc::DimMismatch, "gmm_log_prob: query has length " + std::to_string(z.size()) +
                                    ", model dim is " + std::to_string(g.dim));
    }
    Vector terms(g.components.size());
    Vector diff(g.dim);
    for (std::size_t c = 0; c < g.components.size(); ++c) {
        const auto& comp = g.components[c];
        terms[c] = comp.log_weight + component_log_density(comp, z, diff);
    }
    return logsumexp(terms);
}

Vector gmm_log_prob(const Gmm& g, const Matrix& z) {
    Vector out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) out[i] = gmm_log_prob(g, z.row(i));
    return out;
}

const Gmm& ClassConditionalGmm::at(int cls) const {
    const auto it = per_class.find(cls);
    if (it == per_class.end()) {
        fail(Errc::MissingClassDensity, "no density fitted for class " + std::to_string(cls));
    }
    return it->second;
}

ClassConditionalGmm fit_class_conditional(const Matrix& features, std::span<const int> predicted_labels,
                                          const EmOptions& opts, ClassFitOptions policy,
                                          std::vector<ClassFitReport>* reports) {
    if (predicted_labels.size() != features.rows()) {
        fail(Errc::DimMismatch, "fit_class_conditional: " + std::to_string(predicted_labels.size()) +
                                    " labels for " + std::to_string(features.rows()) + " rows");
    }
    if (features.rows() == 0) fail(Errc::EmptyInput, "fit_class_conditional: no rows");

    std::map<int, std::vector<std::size_t>> rows_by_class;
    for (std::size_t i = 0; i < predicted_labels.size(); ++i) rows_by_class[predicted_labels[i]].push_back(i);

    ClassConditionalGmm out;
    out.dim = features.cols();
    for (const auto& [cls, rows] : rows_by_class) {
        EmOptions class_opts = opts;
        if (rows.size() < opts.n_components) {
            if (!policy.shrink_small_classes) {
                fail(Errc::ClassTooSmall, "class " + std::to_string(cls) + " has " +
                                              std::to_string(rows.size()) + " rows, fewer than " +
                                              std::to_string(opts.n_components) + " components");
            }
            class_opts.n_components = std::max<std::size_t>(1, rows.size() / 2);
            warn("class " + std::to_string(cls) + " has only " + std::to_string(rows.size()) +
                 " rows; using " + std::to_string(class_opts.n_components) + " components");
        }
        EmResult fit = em_fit(features.select_rows(rows), class_opts);
        if (reports) {
            reports->push_back({cls, rows.size(), class_opts.n_components, fit.objective_history.back(),
                                fit.iterations});
        }
        out.per_class.emplace(cls, std::move(fit.model));
        out.classes.push_back(cls);
    }
    return out;
}

}  // namespace luq
