// Update-direction geometry: per-matrix parameter deltas, their dominant
// left-singular subspaces, CCA similarity between subspaces, and the
// per-module drift report comparing two checkpoints against a common base.
#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driftlab/ckptio.hpp"
#include "driftlab/mat.hpp"
#include "driftlab/parallel.hpp"
#include "driftlab/svd.hpp"

namespace driftlab {

// The six tracked projection families, in report order.
inline const std::array<std::string, 6>& module_families() {
    static const std::array<std::string, 6> families = {"q_proj", "k_proj", "v_proj",
                                                        "o_proj", "up_proj", "down_proj"};
    return families;
}

// Accepts names of the form layers.<i>.<module> with a tracked module family.
inline bool parse_matrix_name(const std::string& name, int* layer, std::string* module) {
    if (name.rfind("layers.", 0) != 0) return false;
    const size_t dot = name.find('.', 7);
    if (dot == std::string::npos || dot == 7) return false;
    const std::string idx = name.substr(7, dot - 7);
    for (char c : idx)
        if (c < '0' || c > '9') return false;
    const std::string mod = name.substr(dot + 1);
    for (const auto& fam : module_families()) {
        if (mod == fam) {
            if (layer) *layer = std::stoi(idx);
            if (module) *module = mod;
            return true;
        }
    }
    return false;
}

struct NamedDelta {
    std::map<std::string, Mat> entries;  // layers.<i>.<module> -> delta matrix
};

// Entrywise W_t - W_0 over the tracked weight matrices of two checkpoints.
inline NamedDelta delta(const Checkpoint& ckpt_t, const Checkpoint& ckpt_0) {
    std::string bad;
    for (const auto& [name, mat] : ckpt_t.tensors) {
        auto it = ckpt_0.tensors.find(name);
        if (it == ckpt_0.tensors.end() || !same_shape(mat, it->second)) bad += (bad.empty() ? "" : ", ") + name;
    }
    for (const auto& [name, mat] : ckpt_0.tensors)
        if (!ckpt_t.tensors.count(name)) bad += (bad.empty() ? "" : ", ") + name;
    if (!bad.empty()) throw std::invalid_argument("delta: checkpoints disagree on tensors: " + bad);

    NamedDelta d;
    for (const auto& [name, mat] : ckpt_t.tensors) {
        if (!parse_matrix_name(name, nullptr, nullptr)) continue;
        d.entries.emplace(name, sub(mat, ckpt_0.tensors.at(name)));
    }
    return d;
}

struct DominantSubspace {
    std::string name;
    int k = 0;                   // retained rank (may be below the request)
    Mat u;                       // d_out x k, orthonormal columns
    std::vector<double> sigmas;  // matching singular values
};

// Leading left-singular directions of one named delta. Retains
// min(k, effective rank); a zero delta has no direction and is an error.
inline DominantSubspace dominant_subspace(const NamedDelta& d, const std::string& name, int k) {
    if (k < 1) throw std::invalid_argument("dominant_subspace: k must be positive");
    auto it = d.entries.find(name);
    if (it == d.entries.end()) throw std::invalid_argument("dominant_subspace: no delta named " + name);

    const SvdFactors f = svd(it->second);
    if (f.sigmas.empty() || f.sigmas[0] <= 0.0)
        throw std::runtime_error("dominant_subspace: " + name +
                                 " has no update direction (zero delta; warmup too short?)");
    int effective = 0;
    for (double s : f.sigmas)
        if (s > 1e-12 * f.sigmas[0]) ++effective;
    const int keep = std::min(k, effective);

    DominantSubspace out;
    out.name = name;
    out.k = keep;
    out.u = Mat(f.u.rows, keep);
    for (int i = 0; i < f.u.rows; ++i)
        for (int j = 0; j < keep; ++j) out.u(i, j) = f.u(i, j);
    out.sigmas.assign(f.sigmas.begin(), f.sigmas.begin() + keep);
    return out;
}

// Action of the rank-k truncation on a hidden vector h: each right vector
// selects an input feature, each left vector contributes the output move.
inline std::vector<double> apply_truncated_update(const SvdFactors& f, int k, std::span<const double> h) {
    if (k < 1) throw std::invalid_argument("apply_truncated_update: k must be positive");
    if (static_cast<int>(h.size()) != f.v.rows)
        throw std::invalid_argument("apply_truncated_update: h has length " + std::to_string(h.size()) +
                                    ", expected " + std::to_string(f.v.rows));
    const int keep = std::min(k, f.rank);
    std::vector<double> y(static_cast<size_t>(f.u.rows), 0.0);
    for (int i = 0; i < keep; ++i) {
        double key = 0.0;
        for (int r = 0; r < f.v.rows; ++r) key += f.v(r, i) * h[r];
        const double w = f.sigmas[i] * key;
        for (int r = 0; r < f.u.rows; ++r) y[r] += w * f.u(r, i);
    }
    return y;
}

// Mean of the top-k canonical correlations between two orthonormal bases,
// clamped to [0,1]. Bases are re-orthonormalized first, and a basis left with
// fewer than k columns is an error.
inline double cca_similarity(const Mat& u_t, const Mat& u_s, int k) {
    if (k < 1) throw std::invalid_argument("cca_similarity: k must be positive");
    if (u_t.rows != u_s.rows)
        throw std::invalid_argument("cca_similarity: row dimensions differ (" + std::to_string(u_t.rows) +
                                    " vs " + std::to_string(u_s.rows) + ")");
    const Mat qt = orthonormalize(u_t);
    const Mat qs = orthonormalize(u_s);
    if (qt.cols < k)
        throw std::runtime_error("cca_similarity: first basis has " + std::to_string(qt.cols) +
                                 " columns after rank drop, need " + std::to_string(k));
    if (qs.cols < k)
        throw std::runtime_error("cca_similarity: second basis has " + std::to_string(qs.cols) +
                                 " columns after rank drop, need " + std::to_string(k));

    const SvdFactors f = svd(matmul_at_b(qt, qs));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += f.sigmas[i];
    const double sim = sum / k;
    return std::min(1.0, std::max(0.0, sim));
}

struct DriftReport {
    int k = 0;                                      // requested CCA rank
    std::map<std::string, double> per_matrix;       // name -> similarity in [0,1]
    std::map<std::string, int> per_matrix_k;        // rank actually compared (below k = rank drop)
    std::map<std::string, double> per_module_mean;  // module family -> mean over layers
    std::map<std::string, double> per_module_worst; // module family -> min over layers
    std::vector<std::string> missing;               // zero-delta matrices, excluded from aggregates
    std::pair<int64_t, int64_t> checkpoint_pair;    // (step of a, step of b)
};

// Per-matrix CCA_k between the dominant subspaces of (a - base) and
// (b - base), aggregated per module family. Matrix work fans out to workers;
// aggregation is by name order, so the report is deterministic.
inline DriftReport drift_report(const Checkpoint& base, const Checkpoint& ckpt_a, const Checkpoint& ckpt_b,
                                int k) {
    const NamedDelta da = delta(ckpt_a, base);
    const NamedDelta db = delta(ckpt_b, base);

    std::vector<std::string> names;
    for (const auto& [name, mat] : da.entries) names.push_back(name);

    struct Cell {
        bool missing = false;
        int k_used = 0;
        double sim = 0.0;
        std::string error;
    };
    std::vector<Cell> cells(names.size());
    parallel_for(names.size(), [&](size_t i) {
        const std::string& name = names[i];
        try {
            if (frob_norm(da.entries.at(name)) == 0.0 || frob_norm(db.entries.at(name)) == 0.0) {
                cells[i].missing = true;
                return;
            }
            const DominantSubspace sa = dominant_subspace(da, name, k);
            const DominantSubspace sb = dominant_subspace(db, name, k);
            const int k_eff = std::min(sa.k, sb.k);
            cells[i].k_used = k_eff;
            cells[i].sim = cca_similarity(sa.u, sb.u, k_eff);
        } catch (const std::exception& e) {
            cells[i].error = e.what();
        }
    });
    for (const auto& c : cells)
        if (!c.error.empty()) throw std::runtime_error("drift_report: " + c.error);

    DriftReport rep;
    rep.k = k;
    rep.checkpoint_pair = {ckpt_a.meta.step, ckpt_b.meta.step};
    std::map<std::string, std::vector<double>> by_module;
    for (size_t i = 0; i < names.size(); ++i) {
        if (cells[i].missing) {
            rep.missing.push_back(names[i]);
            std::fprintf(stderr, "warning: %s has a zero delta; excluded from drift aggregates\n",
                         names[i].c_str());
            continue;
        }
        if (cells[i].k_used < k)
            std::fprintf(stderr, "warning: %s compared at reduced rank %d (requested %d)\n", names[i].c_str(),
                         cells[i].k_used, k);
        rep.per_matrix[names[i]] = cells[i].sim;
        rep.per_matrix_k[names[i]] = cells[i].k_used;
        std::string module;
        parse_matrix_name(names[i], nullptr, &module);
        by_module[module].push_back(cells[i].sim);
    }
    for (const auto& [module, sims] : by_module) {
        double sum = 0.0, worst = sims[0];
        for (double s : sims) {
            sum += s;
            worst = std::min(worst, s);
        }
        rep.per_module_mean[module] = sum / static_cast<double>(sims.size());
        rep.per_module_worst[module] = worst;
    }
    return rep;
}

namespace detail {
inline std::string fmt_g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}
}  // namespace detail

// CSV rows: matrix,module,layer,k,cca per matrix, then __mean__ and __worst__
// aggregate rows per module family. Floats carry 9 significant digits.
inline std::string drift_report_csv(const DriftReport& rep) {
    std::string out = "matrix,module,layer,k,cca\n";
    for (const auto& [name, sim] : rep.per_matrix) {
        int layer = 0;
        std::string module;
        parse_matrix_name(name, &layer, &module);
        out += name + "," + module + "," + std::to_string(layer) + "," +
               std::to_string(rep.per_matrix_k.at(name)) + "," + detail::fmt_g9(sim) + "\n";
    }
    for (const auto& fam : module_families()) {
        auto it = rep.per_module_mean.find(fam);
        if (it == rep.per_module_mean.end()) continue;
        out += "__mean__," + fam + ",," + std::to_string(rep.k) + "," + detail::fmt_g9(it->second) + "\n";
    }
    for (const auto& fam : module_families()) {
        auto it = rep.per_module_worst.find(fam);
        if (it == rep.per_module_worst.end()) continue;
        out += "__worst__," + fam + ",," + std::to_string(rep.k) + "," + detail::fmt_g9(it->second) + "\n";
    }
    return out;
}

}  // namespace driftlab
