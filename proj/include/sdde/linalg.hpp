#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace sdde {

using Vector = std::vector<double>;

/// Dense row-major matrix. Used for diffusion values g(x, y) of shape n x m.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool operator==(const Matrix&) const = default;
};

/// Euclidean norm, summed left to right.
inline double norm(std::span<const double> v) {
    double s = 0.0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
}

/// Squared Euclidean distance, summed left to right.
inline double distance_sq(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Frobenius (trace) norm of a matrix.
inline double norm(const Matrix& m) { return norm(std::span<const double>(m.data)); }

/// |u|^e computed as exp(e ln|u|), with 0 -> 0. Avoids NaN for negative bases.
inline double abs_pow(double u, double e) {
    const double a = std::fabs(u);
    if (a == 0.0) return 0.0;
    return std::exp(e * std::log(a));
}

}  // namespace sdde
