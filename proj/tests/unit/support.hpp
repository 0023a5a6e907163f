#pragma once

#include "luq/error.hpp"
#include "luq/linalg.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace luq::test {

// Tags a test case as one of the per-operation worked examples; the
// acceptance runner executes exactly this suite for its oracle criterion.
inline auto examples() { return doctest::test_suite("examples"); }

#define CHECK_THROWS_CODE(expr, errc)                                   \
    do {                                                                \
        bool luq_thrown_ = false;                                       \
        try {                                                           \
            (void)(expr);                                               \
        } catch (const ::luq::Error& luq_e_) {                          \
            luq_thrown_ = true;                                         \
            CHECK_MESSAGE(luq_e_.code() == (errc), luq_e_.what());      \
        }                                                               \
        CHECK_MESSAGE(luq_thrown_, "expected a luq::Error from " #expr); \
    } while (false)

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (double& v : m.data()) v = n(rng);
    return m;
}

inline Matrix random_spd(std::size_t d, std::mt19937_64& rng) {
    const Matrix a = random_matrix(d, d, rng);
    Matrix m = matmul(a, a.transposed());
    for (std::size_t i = 0; i < d; ++i) m(i, i) += 0.5;
    return m;
}

inline Vector to_vec(std::span<const double> s) { return Vector(s.begin(), s.end()); }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("luq-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace luq::test
