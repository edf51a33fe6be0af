// Trusted-direction gradient projection: fit per-matrix output subspaces from
// a clean warmup delta, weight them by normalized singular values, and send
// gradients through U diag(alpha) U^T before the optimizer sees them.
#pragma once

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "driftlab/ckptio.hpp"
#include "driftlab/geometry.hpp"
#include "driftlab/mat.hpp"
#include "driftlab/svd.hpp"

namespace driftlab {

// Normalized singular-value weights alpha_i = sigma_i / sum_j sigma_j.
inline std::vector<double> alphas(const std::vector<double>& sigmas) {
    if (sigmas.empty()) throw std::invalid_argument("alphas: empty sigma vector");
    double sum = 0.0;
    for (double s : sigmas) {
        if (s < 0.0) throw std::invalid_argument("alphas: negative singular value");
        sum += s;
    }
    if (sum <= 0.0) throw std::runtime_error("alphas: all singular values zero, trusted direction undefined");
    std::vector<double> a(sigmas.size());
    for (size_t i = 0; i < sigmas.size(); ++i) a[i] = sigmas[i] / sum;
    return a;
}

struct TrustedEntry {
    Mat u_clean;                 // d_out x k, orthonormal columns
    std::vector<double> alphas;  // k positive, non-increasing, summing to 1
};

struct TrustedProjector {
    std::map<std::string, TrustedEntry> per_matrix;
    int rank = 0;  // configured K (entries may hold less after a rank drop)
    std::string source_run_id;

    void validate() const {
        for (const auto& [name, e] : per_matrix) {
            if (e.u_clean.cols != static_cast<int>(e.alphas.size()))
                throw std::runtime_error("TrustedProjector: " + name + " has mismatched basis and weights");
            double sum = 0.0;
            for (size_t i = 0; i < e.alphas.size(); ++i) {
                if (e.alphas[i] <= 0.0) throw std::runtime_error("TrustedProjector: " + name + " has non-positive alpha");
                if (i > 0 && e.alphas[i] > e.alphas[i - 1] + 1e-15)
                    throw std::runtime_error("TrustedProjector: " + name + " alphas not non-increasing");
                sum += e.alphas[i];
            }
            if (std::fabs(sum - 1.0) > 1e-12)
                throw std::runtime_error("TrustedProjector: " + name + " alphas do not sum to 1");
            if (identity_residual(matmul_at_b(e.u_clean, e.u_clean)) > 1e-10)
                throw std::runtime_error("TrustedProjector: " + name + " basis not orthonormal");
        }
    }
};

// Top-K left singular subspace and weights per matrix of a clean warmup
// delta. Matrices with effective rank below K keep the reduced rank.
inline TrustedProjector fit_trusted(const NamedDelta& clean_delta, int k) {
    if (k < 1) throw std::invalid_argument("fit_trusted: rank must be positive");
    TrustedProjector p;
    p.rank = k;
    for (const auto& [name, dw] : clean_delta.entries) {
        if (frob_norm(dw) == 0.0)
            throw std::runtime_error("fit_trusted: " + name + " has a zero delta; warmup insufficient");
        const DominantSubspace sub = dominant_subspace(clean_delta, name, k);
        if (sub.k < k)
            std::fprintf(stderr, "warning: fit_trusted: %s has rank %d < requested %d; keeping reduced rank\n",
                         name.c_str(), sub.k, k);
        TrustedEntry e;
        e.u_clean = sub.u;
        e.alphas = alphas(sub.sigmas);
        p.per_matrix.emplace(name, std::move(e));
    }
    p.validate();
    return p;
}

// G_parallel = U diag(alpha) U^T G. Columns of the result stay in
// span(U_clean); the largest weight bounds the Frobenius contraction.
inline Mat project_gradient(const Mat& g, const TrustedEntry& entry) {
    const Mat& u = entry.u_clean;
    if (g.rows != u.rows)
        throw std::invalid_argument("project_gradient: gradient has " + std::to_string(g.rows) +
                                    " rows, trusted basis has " + std::to_string(u.rows));
    Mat coeffs = matmul_at_b(u, g);  // k x n
    for (int i = 0; i < coeffs.rows; ++i)
        for (int j = 0; j < coeffs.cols; ++j) coeffs(i, j) *= entry.alphas[static_cast<size_t>(i)];
    return matmul(u, coeffs);
}

// Slices a projector down to a smaller rank; weights renormalize to the kept
// prefix (alpha is proportional to sigma, so renormalizing alpha is exact).
inline TrustedProjector truncate_projector(const TrustedProjector& p, int k) {
    if (k < 1) throw std::invalid_argument("truncate_projector: rank must be positive");
    TrustedProjector out;
    out.rank = k;
    out.source_run_id = p.source_run_id;
    for (const auto& [name, e] : p.per_matrix) {
        const int keep = std::min<int>(k, e.u_clean.cols);
        TrustedEntry t;
        t.u_clean = Mat(e.u_clean.rows, keep);
        for (int i = 0; i < e.u_clean.rows; ++i)
            for (int j = 0; j < keep; ++j) t.u_clean(i, j) = e.u_clean(i, j);
        t.alphas = alphas(std::vector<double>(e.alphas.begin(), e.alphas.begin() + keep));
        out.per_matrix.emplace(name, std::move(t));
    }
    out.validate();
    return out;
}

// Persistence: each matrix stores <name>.U and <name>.alpha in one container.
inline void save_projector(const std::string& path, const TrustedProjector& p, uint64_t seed) {
    std::map<std::string, Mat> tensors;
    for (const auto& [name, e] : p.per_matrix) {
        tensors.emplace(name + ".U", e.u_clean);
        Mat a(static_cast<int>(e.alphas.size()), 1);
        for (size_t i = 0; i < e.alphas.size(); ++i) a.data[i] = e.alphas[i];
        tensors.emplace(name + ".alpha", std::move(a));
    }
    nlohmann::json meta = {{"run_id", p.source_run_id}, {"step", 0},      {"seed", seed},
                           {"created_at", 0},           {"rank", p.rank}, {"kind", "trusted_projector"}};
    write_container(path, tensors, meta);
}

inline TrustedProjector load_projector(const std::string& path) {
    auto [tensors, meta] = read_container(path);
    TrustedProjector p;
    p.rank = meta.value("rank", 0);
    p.source_run_id = meta.value("run_id", std::string());
    for (const auto& [name, mat] : tensors) {
        if (name.size() > 2 && name.ends_with(".U")) {
            const std::string base = name.substr(0, name.size() - 2);
            auto ait = tensors.find(base + ".alpha");
            if (ait == tensors.end())
                throw std::runtime_error(path + ": projector entry " + base + " is missing its alpha vector");
            TrustedEntry e;
            e.u_clean = mat;
            e.alphas.assign(ait->second.data.begin(), ait->second.data.end());
            p.per_matrix.emplace(base, std::move(e));
        }
    }
    if (p.per_matrix.empty()) throw std::runtime_error(path + ": no projector entries found");
    p.validate();
    return p;
}

}  // namespace driftlab
