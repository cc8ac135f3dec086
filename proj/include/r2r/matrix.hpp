#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "r2r/common.hpp"

namespace r2r {

// Dense row-major matrix of 64-bit reals.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline std::string shape_str(const Matrix& m) {
    return "(" + std::to_string(m.rows) + "," + std::to_string(m.cols) + ")";
}

// C = A * B^T where A is (m,k) and B is (n,k). Row-dot-row, contiguous inner loop.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw ShapeError("matmul_nt: inner dims " + shape_str(a) + " vs " + shape_str(b));
    Matrix c(a.rows, b.rows);
    const std::size_t k = a.cols, n = b.rows;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* __restrict ai = a.row(i);
        double* __restrict ci = c.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* __restrict bj = b.row(j);
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += ai[t] * bj[t];
            ci[j] = s;
        }
    }
    return c;
}

// C = A * B where A is (m,k) and B is (k,n). i-k-j loop order, unit-stride inner.
inline Matrix matmul_nn(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul_nn: inner dims " + shape_str(a) + " vs " + shape_str(b));
    Matrix c(a.rows, b.cols);
    const std::size_t k = a.cols, n = b.cols;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* __restrict ai = a.row(i);
        double* __restrict ci = c.row(i);
        for (std::size_t t = 0; t < k; ++t) {
            const double av = ai[t];
            const double* __restrict bt = b.row(t);
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
    return c;
}

// C += A^T * B where A is (k,m) and B is (k,n).
inline void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.rows != b.rows)
        throw ShapeError("matmul_tn: inner dims " + shape_str(a) + " vs " + shape_str(b));
    if (c.rows != a.cols || c.cols != b.cols)
        throw ShapeError("matmul_tn: output shape " + shape_str(c));
    const std::size_t k = a.rows, m = a.cols, n = b.cols;
    for (std::size_t t = 0; t < k; ++t) {
        const double* __restrict at = a.row(t);
        const double* __restrict bt = b.row(t);
        for (std::size_t i = 0; i < m; ++i) {
            const double av = at[i];
            double* __restrict ci = c.row(i);
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows)
        throw ShapeError("matmul_tn: inner dims " + shape_str(a) + " vs " + shape_str(b));
    Matrix c(a.cols, b.cols);
    matmul_tn_acc(a, b, c);
    return c;
}

inline void add_bias_rows(Matrix& m, const std::vector<double>& bias) {
    if (bias.size() != m.cols) throw ShapeError("bias length vs matrix cols");
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* __restrict r = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) r[j] += bias[j];
    }
}

inline void colsum_acc(const Matrix& m, std::vector<double>& out) {
    if (out.size() != m.cols) throw ShapeError("colsum output length");
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* __restrict r = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += r[j];
    }
}

}  // namespace r2r
