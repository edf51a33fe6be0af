// Dense row-major double matrix and the handful of products the rest of
// the library needs. Nothing here is clever; it is meant to be auditable.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace driftlab {

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major, data[r * cols + c]

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension");
    }
    Mat(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension");
        if (data.size() != static_cast<size_t>(r) * static_cast<size_t>(c))
            throw std::invalid_argument("Mat: data length does not match rows*cols");
    }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    bool empty() const { return rows == 0 || cols == 0; }
    size_t size() const { return data.size(); }

    double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
};

inline bool same_shape(const Mat& a, const Mat& b) { return a.rows == b.rows && a.cols == b.cols; }

// Throws if any entry is NaN/Inf, naming the first offending entry.
inline void ensure_finite(const Mat& m, const std::string& what) {
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c)
            if (!std::isfinite(m(r, c)))
                throw std::runtime_error(what + ": non-finite entry at (" + std::to_string(r) + "," +
                                         std::to_string(c) + ")");
}

inline Mat transpose(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) t(c, r) = a(r, c);
    return t;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Mat out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// A^T * B without forming the transpose.
inline Mat matmul_at_b(const Mat& a, const Mat& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_at_b: row dimensions differ");
    Mat out(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.row_ptr(k);
        const double* brow = b.row_ptr(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = out.row_ptr(i);
            for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

inline Mat sub(const Mat& a, const Mat& b) {
    if (!same_shape(a, b)) throw std::invalid_argument("sub: shape mismatch");
    Mat out(a.rows, a.cols);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
    return out;
}

inline double frob_norm(const Mat& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

inline double max_abs(const Mat& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::fabs(v));
    return m;
}

inline double col_dot(const Mat& a, int p, int q) {
    double s = 0.0;
    for (int r = 0; r < a.rows; ++r) s += a(r, p) * a(r, q);
    return s;
}

// max |M - I| over an r x r matrix; orthonormality residual helper.
inline double identity_residual(const Mat& m) {
    double worst = 0.0;
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j)
            worst = std::max(worst, std::fabs(m(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

}  // namespace driftlab
