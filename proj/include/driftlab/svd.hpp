// Thin SVD via one-sided Jacobi, rank-K truncation, and Gram-Schmidt
// orthonormalization. One-sided Jacobi keeps the factor columns mutually
// orthogonal relative to their norms at every stage, which is what makes the
// tight orthonormality bounds here cheap to meet on desk-scale matrices.
#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "driftlab/mat.hpp"

namespace driftlab {

struct SvdFactors {
    Mat u;                       // m x r, orthonormal columns
    std::vector<double> sigmas;  // r, non-increasing, non-negative
    Mat v;                       // n x r, orthonormal columns
    int rank = 0;                // retained triplet count r
};

namespace detail {

// Rotates columns p,q of b (and the accumulated v) until B^T B is diagonal
// to relative precision conv_tol. Returns the last sweep's worst relative
// off-diagonal. Sets *converged.
inline double one_sided_jacobi(Mat& b, Mat& v, double conv_tol, int max_sweeps, bool* converged) {
    const int n = b.cols;
    double off = 0.0;
    *converged = false;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        off = 0.0;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double app = col_dot(b, p, p);
                const double aqq = col_dot(b, q, q);
                const double apq = col_dot(b, p, q);
                const double denom = std::sqrt(app * aqq);
                if (denom == 0.0) continue;  // a zero column cannot rotate
                const double rel = std::fabs(apq) / denom;
                if (rel <= conv_tol) continue;
                off = std::max(off, rel);

                // Rotation angle zeroing the (p,q) entry of B^T B.
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int r = 0; r < b.rows; ++r) {
                    const double bp = b(r, p), bq = b(r, q);
                    b(r, p) = c * bp - s * bq;
                    b(r, q) = s * bp + c * bq;
                }
                for (int r = 0; r < v.rows; ++r) {
                    const double vp = v(r, p), vq = v(r, q);
                    v(r, p) = c * vp - s * vq;
                    v(r, q) = s * vp + c * vq;
                }
            }
        }
        if (off <= conv_tol) {
            *converged = true;
            return off;
        }
    }
    return off;
}

// Replaces zero columns of u (marked by sigma == 0) with unit vectors
// orthogonal to every other column. Candidate choice is deterministic: the
// standard basis vector whose projection residual is largest wins.
inline void complete_orthonormal(Mat& u, const std::vector<double>& sigmas) {
    const int m = u.rows;
    const int r = u.cols;
    for (int j = 0; j < r; ++j) {
        if (sigmas[j] != 0.0) continue;
        std::vector<double> best(m, 0.0);
        double best_norm = -1.0;
        for (int cand = 0; cand < m; ++cand) {
            std::vector<double> w(m, 0.0);
            w[cand] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (int k = 0; k < r; ++k) {
                    if (k == j) continue;
                    if (sigmas[k] == 0.0 && k > j) continue;  // not yet filled
                    double proj = 0.0;
                    for (int i = 0; i < m; ++i) proj += u(i, k) * w[i];
                    for (int i = 0; i < m; ++i) w[i] -= proj * u(i, k);
                }
            }
            double nrm = 0.0;
            for (double x : w) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > best_norm) {
                best_norm = nrm;
                best = w;
            }
        }
        for (int i = 0; i < m; ++i) u(i, j) = best[i] / best_norm;
    }
}

// Sign convention: the largest-magnitude entry of each left singular vector
// is made non-negative; the paired right vector flips with it.
inline void fix_signs(Mat& u, Mat& v) {
    for (int j = 0; j < u.cols; ++j) {
        int imax = 0;
        double amax = -1.0;
        for (int i = 0; i < u.rows; ++i) {
            const double a = std::fabs(u(i, j));
            if (a > amax) {
                amax = a;
                imax = i;
            }
        }
        if (u(imax, j) < 0.0) {
            for (int i = 0; i < u.rows; ++i) u(i, j) = -u(i, j);
            for (int i = 0; i < v.rows; ++i) v(i, j) = -v(i, j);
        }
    }
}

}  // namespace detail

// Thin SVD, r = min(rows, cols) triplets retained, sigmas non-increasing.
inline SvdFactors svd(const Mat& a) {
    if (a.empty()) throw std::invalid_argument("svd: empty matrix");
    ensure_finite(a, "svd");

    const bool transposed = a.rows < a.cols;
    Mat b = transposed ? transpose(a) : a;
    const int n = b.cols;  // r = n after orientation

    Mat vacc = Mat::identity(n);
    bool converged = false;
    const double resid = detail::one_sided_jacobi(b, vacc, 1e-14, 60, &converged);
    if (!converged)
        throw std::runtime_error("svd: no convergence after 60 sweeps, off-diagonal residual " +
                                 std::to_string(resid));

    std::vector<double> sigmas(n);
    for (int j = 0; j < n; ++j) sigmas[j] = std::sqrt(col_dot(b, j, j));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return sigmas[i] > sigmas[j]; });

    Mat left(b.rows, n);
    Mat right(n, n);
    std::vector<double> sorted(n);
    for (int j = 0; j < n; ++j) {
        const int src = order[j];
        sorted[j] = sigmas[src];
        if (sigmas[src] > 0.0)
            for (int i = 0; i < b.rows; ++i) left(i, j) = b(i, src) / sigmas[src];
        for (int i = 0; i < n; ++i) right(i, j) = vacc(i, src);
    }
    detail::complete_orthonormal(left, sorted);

    SvdFactors f;
    f.sigmas = std::move(sorted);
    f.rank = n;
    if (transposed) {
        f.u = std::move(right);
        f.v = std::move(left);
    } else {
        f.u = std::move(left);
        f.v = std::move(right);
    }
    detail::fix_signs(f.u, f.v);
    return f;
}

// Keeps the min(k, rank) leading triplets: the Eckart-Young best rank-k
// approximation of the original matrix.
inline SvdFactors truncate(const SvdFactors& f, int k) {
    if (k < 1) throw std::invalid_argument("truncate: k must be positive");
    const int keep = std::min(k, f.rank);
    SvdFactors out;
    out.rank = keep;
    out.sigmas.assign(f.sigmas.begin(), f.sigmas.begin() + keep);
    out.u = Mat(f.u.rows, keep);
    out.v = Mat(f.v.rows, keep);
    for (int i = 0; i < f.u.rows; ++i)
        for (int j = 0; j < keep; ++j) out.u(i, j) = f.u(i, j);
    for (int i = 0; i < f.v.rows; ++i)
        for (int j = 0; j < keep; ++j) out.v(i, j) = f.v(i, j);
    return out;
}

inline Mat reconstruct(const SvdFactors& f) {
    Mat out(f.u.rows, f.v.rows);
    for (int k = 0; k < f.rank; ++k) {
        const double s = f.sigmas[k];
        if (s == 0.0) continue;
        for (int i = 0; i < out.rows; ++i) {
            const double us = f.u(i, k) * s;
            for (int j = 0; j < out.cols; ++j) out(i, j) += us * f.v(j, k);
        }
    }
    return out;
}

// Orthonormal basis of the column space via modified Gram-Schmidt with one
// reorthogonalization pass. Columns with residual norm <= 1e-12*||M||_F are
// dropped, so the output may be narrower than the input (possibly empty).
inline Mat orthonormalize(const Mat& m) {
    if (m.cols > m.rows) throw std::invalid_argument("orthonormalize: more columns than rows");
    ensure_finite(m, "orthonormalize");
    const double drop_tol = 1e-12 * frob_norm(m);

    std::vector<std::vector<double>> basis;
    for (int j = 0; j < m.cols; ++j) {
        std::vector<double> w(m.rows);
        for (int i = 0; i < m.rows; ++i) w[i] = m(i, j);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : basis) {
                double proj = 0.0;
                for (int i = 0; i < m.rows; ++i) proj += q[i] * w[i];
                for (int i = 0; i < m.rows; ++i) w[i] -= proj * q[i];
            }
        }
        double nrm = 0.0;
        for (double x : w) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm > drop_tol) {
            for (double& x : w) x /= nrm;
            basis.push_back(std::move(w));
        }
    }

    Mat q(m.rows, static_cast<int>(basis.size()));
    for (int j = 0; j < q.cols; ++j)
        for (int i = 0; i < m.rows; ++i) q(i, j) = basis[j][i];
    return q;
}

}  // namespace driftlab
