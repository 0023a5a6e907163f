#include "luq/linalg.hpp"

#include "luq/error.hpp"
#include "luq/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace luq {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
    if (data_.size() != rows * cols) {
        fail(Errc::DimMismatch, "matrix data length " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) fail(Errc::DimMismatch, "ragged initializer rows");
        std::copy(row.begin(), row.end(), m.row(i++).begin());
    }
    return m;
}

Matrix Matrix::column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        fail(Errc::DimMismatch, "matmul: inner dims " + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto src = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
        }
    }
    return out;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

CholeskyFactor CholeskyFactor::from_lower(Matrix lower) {
    if (lower.rows() != lower.cols()) fail(Errc::DimMismatch, "cholesky factor must be square");
    for (std::size_t i = 0; i < lower.rows(); ++i) {
        if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) {
            fail(Errc::NotPositiveDefinite, "cholesky factor diagonal must be positive");
        }
        for (std::size_t j = i + 1; j < lower.cols(); ++j) {
            if (lower(i, j) != 0.0) fail(Errc::InvalidArgument, "cholesky factor not lower triangular");
        }
    }
    return CholeskyFactor(std::move(lower));
}

Matrix CholeskyFactor::reconstruct() const {
    const std::size_t n = dim();
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k <= j; ++k) s += lower_(i, k) * lower_(j, k);
            m(i, j) = s;
            m(j, i) = s;
        }
    }
    return m;
}

CholeskyFactor cholesky(const Matrix& m) {
    const std::size_t n = m.rows();
    if (m.cols() != n) fail(Errc::DimMismatch, "cholesky: matrix is not square");
    double scale = 1.0;
    for (double v : m.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > 1e-9 * scale) {
                fail(Errc::InvalidArgument, "cholesky: matrix is not symmetric");
            }
        }
    }
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double pivot = m(j, j);
        for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
        if (!(pivot > 0.0) || !std::isfinite(pivot)) {
            fail(Errc::NotPositiveDefinite,
                 "cholesky: pivot " + std::to_string(j) + " is " + std::to_string(pivot));
        }
        const double d = std::sqrt(pivot);
        l(j, j) = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / d;
        }
    }
    return CholeskyFactor::from_lower(std::move(l));
}

double log_det(const CholeskyFactor& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.dim(); ++i) s += std::log(f.lower()(i, i));
    return 2.0 * s;
}

Vector solve_lower(const CholeskyFactor& f, std::span<const double> b) {
    const std::size_t n = f.dim();
    if (b.size() != n) fail(Errc::DimMismatch, "solve_lower: rhs length mismatch");
    const Matrix& l = f.lower();
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        const auto li = l.row(i);
        for (std::size_t k = 0; k < i; ++k) s -= li[k] * x[k];
        x[i] = s / li[i];
    }
    return x;
}

double mahalanobis_sq(const CholeskyFactor& f, std::span<const double> diff) {
    const Vector y = solve_lower(f, diff);
    double s = 0.0;
    for (double v : y) s += v * v;
    return s;
}

double logsumexp(std::span<const double> v) {
    if (v.empty()) fail(Errc::EmptyInput, "logsumexp: empty input");
    const double hi = *std::max_element(v.begin(), v.end());
    if (hi == -std::numeric_limits<double>::infinity()) {
        fail(Errc::InvalidArgument, "logsumexp: all entries are -inf");
    }
    if (!std::isfinite(hi)) return hi;
    double s = 0.0;
    for (double x : v) s += std::exp(x - hi);
    return hi + std::log(s);
}

Vector column_mean(const Matrix& x) {
    Vector mean(x.cols(), 0.0);
    if (x.rows() == 0) return mean;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) mean[j] += r[j];
    }
    for (double& m : mean) m /= static_cast<double>(x.rows());
    return mean;
}

Matrix sample_covariance(const Matrix& x, std::span<const double> mean) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (mean.size() != d) fail(Errc::DimMismatch, "sample_covariance: mean length mismatch");
    if (n < 2) fail(Errc::TooFewSamples, "sample_covariance needs at least 2 rows");
    Matrix cov(d, d);
    Vector diff(d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = x.row(i);
        for (std::size_t j = 0; j < d; ++j) diff[j] = r[j] - mean[j];
        for (std::size_t a = 0; a < d; ++a) {
            const double da = diff[a];
            auto crow = cov.row(a);
            for (std::size_t b = a; b < d; ++b) crow[b] += da * diff[b];
        }
    }
    const double denom = static_cast<double>(n - 1);
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            cov(a, b) /= denom;
            cov(b, a) = cov(a, b);
        }
    }
    return cov;
}

SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tol, int max_sweeps) {
    const std::size_t n = symmetric.rows();
    if (symmetric.cols() != n) fail(Errc::DimMismatch, "jacobi_eigen: matrix is not square");
    Matrix a = symmetric;
    Matrix v = Matrix::identity(n);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(2.0 * s);
    };
    const double total = std::max(frobenius_norm(a), std::numeric_limits<double>::min());

    for (int sweep = 0; sweep < max_sweeps && off_norm() > tol * total; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < std::numeric_limits<double>::min()) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.values[j] = a(src, src);
        std::size_t arg = 0;
        for (std::size_t k = 1; k < n; ++k)
            if (std::abs(v(k, src)) > std::abs(v(arg, src))) arg = k;
        const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = sign * v(k, src);
    }
    return out;
}

PcaModel pca_fit(const Matrix& x, std::size_t out_dim, PcaOptions opts) {
    if (x.rows() < 2) fail(Errc::TooFewSamples, "pca_fit needs at least 2 rows");
    if (out_dim == 0 || out_dim > std::min(x.rows(), x.cols())) {
        fail(Errc::InvalidArgument, "pca_fit: out_dim " + std::to_string(out_dim) +
                                        " must be in [1, min(rows, cols)]");
    }
    PcaModel p;
    p.input_dim = x.cols();
    p.out_dim = out_dim;
    p.whiten = opts.whiten;
    p.mean = column_mean(x);
    const SymmetricEigen eig = jacobi_eigen(sample_covariance(x, p.mean));

    const double largest = std::max(eig.values.empty() ? 0.0 : eig.values.front(), 0.0);
    const double rank_tol = largest * 1e-12 * static_cast<double>(x.cols());
    std::size_t rank = 0;
    p.eigenvalues.resize(out_dim);
    p.basis = Matrix(x.cols(), out_dim);
    for (std::size_t j = 0; j < out_dim; ++j) {
        double ev = eig.values[j];
        if (ev > rank_tol) {
            ++rank;
        } else {
            ev = 0.0;
        }
        p.eigenvalues[j] = ev;
        for (std::size_t k = 0; k < x.cols(); ++k) p.basis(k, j) = eig.vectors(k, j);
    }
    if (rank < out_dim) {
        warn("pca_fit: requested " + std::to_string(out_dim) + " components but numerical rank is " +
             std::to_string(rank) + "; padding with zero eigenvalues");
    }
    return p;
}

PcaModel pca_fit(const FeatureMatrix& x, std::size_t out_dim, PcaOptions opts) {
    return pca_fit(x.values, out_dim, opts);
}

namespace {
double whiten_scale(const PcaModel& p, std::size_t j) {
    if (!p.whiten) return 1.0;
    const double floor = std::max(p.eigenvalues.empty() ? 0.0 : p.eigenvalues.front(), 1.0) * 1e-12;
    return 1.0 / std::sqrt(std::max(p.eigenvalues[j], floor));
}
}  // namespace

Matrix pca_transform(const PcaModel& p, const Matrix& x) {
    if (x.cols() != p.input_dim) {
        fail(Errc::DimMismatch, "pca_transform: input has " + std::to_string(x.cols()) +
                                    " columns, model expects " + std::to_string(p.input_dim));
    }
    Matrix out(x.rows(), p.out_dim);
    Vector centered(p.input_dim);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        for (std::size_t k = 0; k < p.input_dim; ++k) centered[k] = r[k] - p.mean[k];
        auto dst = out.row(i);
        for (std::size_t k = 0; k < p.input_dim; ++k) {
            const auto b = p.basis.row(k);
            for (std::size_t j = 0; j < p.out_dim; ++j) dst[j] += centered[k] * b[j];
        }
        for (std::size_t j = 0; j < p.out_dim; ++j) dst[j] *= whiten_scale(p, j);
    }
    return out;
}

FeatureMatrix pca_transform(const PcaModel& p, const FeatureMatrix& x) {
    return FeatureMatrix{pca_transform(p, x.values), x.layer, x.source};
}

Matrix pca_inverse_transform(const PcaModel& p, const Matrix& reduced) {
    if (reduced.cols() != p.out_dim) fail(Errc::DimMismatch, "pca_inverse_transform: dim mismatch");
    Matrix out(reduced.rows(), p.input_dim);
    for (std::size_t i = 0; i < reduced.rows(); ++i) {
        const auto r = reduced.row(i);
        auto dst = out.row(i);
        for (std::size_t k = 0; k < p.input_dim; ++k) {
            const auto b = p.basis.row(k);
            double s = p.mean[k];
            for (std::size_t j = 0; j < p.out_dim; ++j) s += r[j] / whiten_scale(p, j) * b[j];
            dst[k] = s;
        }
    }
    return out;
}

}  // namespace luq
