#pragma once

// Dense row-major matrices and the handful of factorizations the density
// models need: Cholesky, log-determinants, log-sum-exp, symmetric
// eigendecomposition and PCA.

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace luq {

using Vector = std::vector<double>;

// Matrix storage starts on a 64-byte boundary. Vectorized reductions peel
// scalar iterations up to the first aligned element, so without a fixed
// alignment the summation order (and the last bits of results) would depend
// on where the allocator happened to place each buffer.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix column(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    Matrix transposed() const;
    Matrix select_rows(std::span<const std::size_t> indices) const;
    bool all_finite() const noexcept;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double, AlignedAllocator<double>> data_;
};

// A latent feature matrix together with where it came from.
struct FeatureMatrix {
    Matrix values;
    int layer = -1;
    std::string source;

    std::size_t rows() const noexcept { return values.rows(); }
    std::size_t cols() const noexcept { return values.cols(); }
};

Matrix matmul(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);

// Lower-triangular Cholesky factor with strictly positive diagonal.
class CholeskyFactor {
public:
    CholeskyFactor() = default;

    // Validates shape, triangularity and positive diagonal.
    static CholeskyFactor from_lower(Matrix lower);

    std::size_t dim() const noexcept { return lower_.rows(); }
    const Matrix& lower() const noexcept { return lower_; }

    // L·Lᵀ
    Matrix reconstruct() const;

    bool operator==(const CholeskyFactor&) const = default;

private:
    explicit CholeskyFactor(Matrix lower) : lower_(std::move(lower)) {}
    Matrix lower_;
};

// Throws Errc::NotPositiveDefinite when a pivot is not strictly positive.
CholeskyFactor cholesky(const Matrix& m);

double log_det(const CholeskyFactor& f);

// Solves L·x = b by forward substitution.
Vector solve_lower(const CholeskyFactor& f, std::span<const double> b);

// ‖L⁻¹·diff‖²
double mahalanobis_sq(const CholeskyFactor& f, std::span<const double> diff);

// log Σ exp(v); entries may be -inf but not all of them.
double logsumexp(std::span<const double> v);

Vector column_mean(const Matrix& x);

// Unbiased (n-1) sample covariance around `mean`.
Matrix sample_covariance(const Matrix& x, std::span<const double> mean);

struct SymmetricEigen {
    Vector values;    // non-increasing
    Matrix vectors;   // column j pairs with values[j]
};

// Cyclic Jacobi rotations. Column signs are fixed so the largest-magnitude
// entry of every eigenvector is positive.
SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tol = 1e-14, int max_sweeps = 100);

struct PcaModel {
    std::size_t input_dim = 0;
    std::size_t out_dim = 0;
    Vector mean;
    Matrix basis;       // input_dim × out_dim, orthonormal columns
    Vector eigenvalues; // non-increasing, ≥ 0
    bool whiten = false;

    bool operator==(const PcaModel&) const = default;
};

struct PcaOptions {
    bool whiten = false;
};

PcaModel pca_fit(const Matrix& x, std::size_t out_dim, PcaOptions opts = {});
PcaModel pca_fit(const FeatureMatrix& x, std::size_t out_dim, PcaOptions opts = {});

Matrix pca_transform(const PcaModel& p, const Matrix& x);
FeatureMatrix pca_transform(const PcaModel& p, const FeatureMatrix& x);

// Maps reduced coordinates back to input space (exact when out_dim == input_dim).
Matrix pca_inverse_transform(const PcaModel& p, const Matrix& reduced);

}  // namespace luq
