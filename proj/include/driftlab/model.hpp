// Two-layer decoder-only attention network in plain double arithmetic with a
// hand-written backward pass. Parameters live in a named map so checkpoints,
// deltas, and gradient projection all speak the same naming scheme:
// layers.<i>.{q,k,v,o,up,down}_proj plus tok_embed/pos_embed/unembed.
// Norms are parameter-free RMSNorm, so every trainable tensor is a matrix.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "driftlab/ckptio.hpp"
#include "driftlab/mat.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

struct ModelDims {
    static constexpr int vocab = 24;
    static constexpr int d_model = 32;
    static constexpr int n_heads = 2;
    static constexpr int head_dim = d_model / n_heads;
    static constexpr int d_ff = 64;
    static constexpr int ctx = 24;
    static constexpr int n_layers = 2;
};

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct PolicyModel {
    std::map<std::string, Mat> params;

    static const std::vector<std::string>& layer_matrix_names() {
        static const std::vector<std::string> names = [] {
            std::vector<std::string> v;
            for (int l = 0; l < ModelDims::n_layers; ++l)
                for (const char* m : {"q_proj", "k_proj", "v_proj", "o_proj", "up_proj", "down_proj"})
                    v.push_back("layers." + std::to_string(l) + "." + m);
            return v;
        }();
        return names;
    }

    static PolicyModel init(uint64_t seed, double init_std) {
        PolicyModel m;
        auto add = [&](const std::string& name, int rows, int cols, double sd) {
            Mat w(rows, cols);
            RandomStream rng{seed, 0x70617261ULL, fnv1a(name)};
            for (double& x : w.data) x = sd * rng.next_gaussian();
            m.params.emplace(name, std::move(w));
        };
        auto add_std = [&](const std::string& name, int rows, int cols) { add(name, rows, cols, init_std); };
        add_std("tok_embed", ModelDims::vocab, ModelDims::d_model);
        add("pos_embed", ModelDims::ctx, ModelDims::d_model, 0.25 * init_std);  // positions start faint
        add_std("unembed", ModelDims::vocab, ModelDims::d_model);
        for (int l = 0; l < ModelDims::n_layers; ++l) {
            const std::string p = "layers." + std::to_string(l) + ".";
            add_std(p + "q_proj", ModelDims::d_model, ModelDims::d_model);
            add_std(p + "k_proj", ModelDims::d_model, ModelDims::d_model);
            add_std(p + "v_proj", ModelDims::d_model, ModelDims::d_model);
            add_std(p + "o_proj", ModelDims::d_model, ModelDims::d_model);
            add_std(p + "up_proj", ModelDims::d_ff, ModelDims::d_model);
            add_std(p + "down_proj", ModelDims::d_model, ModelDims::d_ff);
        }
        return m;
    }

    bool finite() const {
        for (const auto& [name, mat] : params)
            for (double v : mat.data)
                if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::map<std::string, Mat> zero_like_params(const PolicyModel& m) {
    std::map<std::string, Mat> g;
    for (const auto& [name, mat] : m.params) g.emplace(name, Mat(mat.rows, mat.cols));
    return g;
}

namespace detail {

constexpr double kNormEps = 1e-6;

// y = W x
inline void matvec(const Mat& w, const double* x, double* y) {
    for (int r = 0; r < w.rows; ++r) {
        const double* row = w.row_ptr(r);
        double s = 0.0;
        for (int c = 0; c < w.cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
}

// dx += W^T dy
inline void matvec_t_acc(const Mat& w, const double* dy, double* dx) {
    for (int r = 0; r < w.rows; ++r) {
        const double dyr = dy[r];
        if (dyr == 0.0) continue;
        const double* row = w.row_ptr(r);
        for (int c = 0; c < w.cols; ++c) dx[c] += row[c] * dyr;
    }
}

// G += dy (outer) x
inline void outer_acc(Mat& g, const double* dy, const double* x) {
    for (int r = 0; r < g.rows; ++r) {
        const double dyr = dy[r];
        if (dyr == 0.0) continue;
        double* row = g.row_ptr(r);
        for (int c = 0; c < g.cols; ++c) row[c] += dyr * x[c];
    }
}

inline double rmsnorm_fwd(const double* x, double* y, int n) {
    double ms = 0.0;
    for (int i = 0; i < n; ++i) ms += x[i] * x[i];
    const double inv = 1.0 / std::sqrt(ms / n + kNormEps);
    for (int i = 0; i < n; ++i) y[i] = x[i] * inv;
    return inv;
}

// dx += d(rmsnorm)/dx applied to dy, given the forward input and its inv.
inline void rmsnorm_bwd_acc(const double* dy, const double* x, double inv, double* dx, int n) {
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += dy[i] * x[i];
    const double coeff = dot * inv * inv * inv / n;
    for (int i = 0; i < n; ++i) dx[i] += dy[i] * inv - coeff * x[i];
}

inline void softmax_inplace(double* z, int n) {
    double mx = z[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        z[i] = std::exp(z[i] - mx);
        sum += z[i];
    }
    for (int i = 0; i < n; ++i) z[i] /= sum;
}

}  // namespace detail

struct LayerCache {
    // All position-major: buffer[t * width + i].
    std::vector<double> x_in, a, q, k, v, ctx_cat, x_mid, m;  // T x d_model
    std::vector<double> u;                                    // T x d_ff
    std::vector<double> inv1, inv2;                           // T
    std::array<std::vector<double>, ModelDims::n_heads> attn; // each T x T, rows are softmaxed
};

struct ForwardCache {
    std::vector<int> tokens;
    int t_len = 0;
    std::array<LayerCache, ModelDims::n_layers> layers;
    std::vector<double> x_final, f;  // T x d_model
    std::vector<double> invf;        // T
    std::vector<double> probs;       // T x vocab, each row sums to 1
};

// Full forward pass; fills the cache needed by backward and the per-position
// next-token distributions.
inline void forward(const PolicyModel& model, std::span<const int> tokens, ForwardCache& cache) {
    constexpr int D = ModelDims::d_model;
    constexpr int F = ModelDims::d_ff;
    constexpr int H = ModelDims::n_heads;
    constexpr int HD = ModelDims::head_dim;
    const int T = static_cast<int>(tokens.size());
    if (T < 1 || T > ModelDims::ctx) throw std::invalid_argument("forward: sequence length out of range");
    for (int tok : tokens)
        if (tok < 0 || tok >= ModelDims::vocab) throw std::invalid_argument("forward: token id out of range");

    cache.tokens.assign(tokens.begin(), tokens.end());
    cache.t_len = T;

    const Mat& tok_embed = model.params.at("tok_embed");
    const Mat& pos_embed = model.params.at("pos_embed");
    const Mat& unembed = model.params.at("unembed");

    std::vector<double> h(static_cast<size_t>(T) * D);
    for (int t = 0; t < T; ++t) {
        const double* te = tok_embed.row_ptr(tokens[t]);
        const double* pe = pos_embed.row_ptr(t);
        for (int i = 0; i < D; ++i) h[t * D + i] = te[i] + pe[i];
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(HD));
    for (int l = 0; l < ModelDims::n_layers; ++l) {
        LayerCache& lc = cache.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        const Mat& wq = model.params.at(p + "q_proj");
        const Mat& wk = model.params.at(p + "k_proj");
        const Mat& wv = model.params.at(p + "v_proj");
        const Mat& wo = model.params.at(p + "o_proj");
        const Mat& wup = model.params.at(p + "up_proj");
        const Mat& wdown = model.params.at(p + "down_proj");

        lc.x_in = h;
        lc.a.assign(static_cast<size_t>(T) * D, 0.0);
        lc.q.assign(static_cast<size_t>(T) * D, 0.0);
        lc.k.assign(static_cast<size_t>(T) * D, 0.0);
        lc.v.assign(static_cast<size_t>(T) * D, 0.0);
        lc.ctx_cat.assign(static_cast<size_t>(T) * D, 0.0);
        lc.inv1.assign(T, 0.0);
        lc.inv2.assign(T, 0.0);
        for (auto& head : lc.attn) head.assign(static_cast<size_t>(T) * T, 0.0);

        for (int t = 0; t < T; ++t) {
            lc.inv1[t] = detail::rmsnorm_fwd(&lc.x_in[t * D], &lc.a[t * D], D);
            detail::matvec(wq, &lc.a[t * D], &lc.q[t * D]);
            detail::matvec(wk, &lc.a[t * D], &lc.k[t * D]);
            detail::matvec(wv, &lc.a[t * D], &lc.v[t * D]);
        }
        for (int hd = 0; hd < H; ++hd) {
            const int off = hd * HD;
            std::vector<double>& pmat = lc.attn[hd];
            for (int t = 0; t < T; ++t) {
                double* prow = &pmat[static_cast<size_t>(t) * T];
                for (int s = 0; s <= t; ++s) {
                    double d = 0.0;
                    for (int j = 0; j < HD; ++j) d += lc.q[t * D + off + j] * lc.k[s * D + off + j];
                    prow[s] = d * scale;
                }
                detail::softmax_inplace(prow, t + 1);
                for (int j = 0; j < HD; ++j) {
                    double acc = 0.0;
                    for (int s = 0; s <= t; ++s) acc += prow[s] * lc.v[s * D + off + j];
                    lc.ctx_cat[t * D + off + j] = acc;
                }
            }
        }
        for (int t = 0; t < T; ++t) {
            double attn_out[D];
            detail::matvec(wo, &lc.ctx_cat[t * D], attn_out);
            for (int i = 0; i < D; ++i) h[t * D + i] += attn_out[i];
        }

        lc.x_mid = h;
        lc.m.assign(static_cast<size_t>(T) * D, 0.0);
        lc.u.assign(static_cast<size_t>(T) * F, 0.0);
        for (int t = 0; t < T; ++t) {
            lc.inv2[t] = detail::rmsnorm_fwd(&lc.x_mid[t * D], &lc.m[t * D], D);
            double u_pre[F];
            detail::matvec(wup, &lc.m[t * D], u_pre);
            for (int j = 0; j < F; ++j) lc.u[t * F + j] = u_pre[j] > 0.0 ? u_pre[j] : 0.0;
            double mlp_out[D];
            detail::matvec(wdown, &lc.u[t * F], mlp_out);
            for (int i = 0; i < D; ++i) h[t * D + i] += mlp_out[i];
        }
    }

    cache.x_final = h;
    cache.f.assign(static_cast<size_t>(T) * D, 0.0);
    cache.invf.assign(T, 0.0);
    cache.probs.assign(static_cast<size_t>(T) * ModelDims::vocab, 0.0);
    for (int t = 0; t < T; ++t) {
        cache.invf[t] = detail::rmsnorm_fwd(&cache.x_final[t * D], &cache.f[t * D], D);
        detail::matvec(unembed, &cache.f[t * D], &cache.probs[t * ModelDims::vocab]);
        detail::softmax_inplace(&cache.probs[t * ModelDims::vocab], ModelDims::vocab);
    }
}

// Backward from gradients w.r.t. logits (position-major, T x vocab). Adds
// parameter gradients into `grads`, which must be shaped like the model.
inline void backward(const PolicyModel& model, const ForwardCache& cache, const std::vector<double>& dlogits,
                     std::map<std::string, Mat>& grads) {
    constexpr int D = ModelDims::d_model;
    constexpr int F = ModelDims::d_ff;
    constexpr int H = ModelDims::n_heads;
    constexpr int HD = ModelDims::head_dim;
    constexpr int V = ModelDims::vocab;
    const int T = cache.t_len;
    if (dlogits.size() != static_cast<size_t>(T) * V)
        throw std::invalid_argument("backward: dlogits has wrong length");

    const Mat& unembed = model.params.at("unembed");
    Mat& g_unembed = grads.at("unembed");
    Mat& g_tok = grads.at("tok_embed");
    Mat& g_pos = grads.at("pos_embed");

    // Through unembedding and the final norm.
    std::vector<double> dx(static_cast<size_t>(T) * D, 0.0);
    for (int t = 0; t < T; ++t) {
        const double* dl = &dlogits[static_cast<size_t>(t) * V];
        bool any = false;
        for (int i = 0; i < V; ++i)
            if (dl[i] != 0.0) any = true;
        if (!any) continue;
        double df[D] = {0.0};
        detail::outer_acc(g_unembed, dl, &cache.f[t * D]);
        detail::matvec_t_acc(unembed, dl, df);
        detail::rmsnorm_bwd_acc(df, &cache.x_final[t * D], cache.invf[t], &dx[t * D], D);
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(HD));
    for (int l = ModelDims::n_layers - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        const Mat& wq = model.params.at(p + "q_proj");
        const Mat& wk = model.params.at(p + "k_proj");
        const Mat& wv = model.params.at(p + "v_proj");
        const Mat& wo = model.params.at(p + "o_proj");
        const Mat& wup = model.params.at(p + "up_proj");
        const Mat& wdown = model.params.at(p + "down_proj");
        Mat& g_wq = grads.at(p + "q_proj");
        Mat& g_wk = grads.at(p + "k_proj");
        Mat& g_wv = grads.at(p + "v_proj");
        Mat& g_wo = grads.at(p + "o_proj");
        Mat& g_wup = grads.at(p + "up_proj");
        Mat& g_wdown = grads.at(p + "down_proj");

        // MLP block: dx is the gradient at the layer output.
        std::vector<double> dx_mid(static_cast<size_t>(T) * D, 0.0);
        for (int t = 0; t < T; ++t) {
            const double* dout = &dx[t * D];
            double du[F] = {0.0};
            detail::outer_acc(g_wdown, dout, &lc.u[t * F]);
            detail::matvec_t_acc(wdown, dout, du);
            for (int j = 0; j < F; ++j)
                if (lc.u[t * F + j] <= 0.0) du[j] = 0.0;  // relu mask
            double dm[D] = {0.0};
            detail::outer_acc(g_wup, du, &lc.m[t * D]);
            detail::matvec_t_acc(wup, du, dm);
            for (int i = 0; i < D; ++i) dx_mid[t * D + i] = dout[i];  // residual branch
            detail::rmsnorm_bwd_acc(dm, &lc.x_mid[t * D], lc.inv2[t], &dx_mid[t * D], D);
        }

        // Attention block.
        std::vector<double> dctx(static_cast<size_t>(T) * D, 0.0);
        std::vector<double> dq(static_cast<size_t>(T) * D, 0.0);
        std::vector<double> dk(static_cast<size_t>(T) * D, 0.0);
        std::vector<double> dv(static_cast<size_t>(T) * D, 0.0);
        for (int t = 0; t < T; ++t) {
            const double* dmid = &dx_mid[t * D];
            detail::outer_acc(g_wo, dmid, &lc.ctx_cat[t * D]);
            detail::matvec_t_acc(wo, dmid, &dctx[t * D]);
        }
        std::vector<double> dp(T);
        for (int hd = 0; hd < H; ++hd) {
            const int off = hd * HD;
            const std::vector<double>& pmat = lc.attn[hd];
            for (int t = 0; t < T; ++t) {
                const double* prow = &pmat[static_cast<size_t>(t) * T];
                double dot = 0.0;
                for (int s = 0; s <= t; ++s) {
                    double acc = 0.0;
                    for (int j = 0; j < HD; ++j) acc += dctx[t * D + off + j] * lc.v[s * D + off + j];
                    dp[s] = acc;
                    dot += prow[s] * acc;
                    for (int j = 0; j < HD; ++j) dv[s * D + off + j] += prow[s] * dctx[t * D + off + j];
                }
                for (int s = 0; s <= t; ++s) {
                    const double dscore = prow[s] * (dp[s] - dot) * scale;
                    if (dscore == 0.0) continue;
                    for (int j = 0; j < HD; ++j) {
                        dq[t * D + off + j] += dscore * lc.k[s * D + off + j];
                        dk[s * D + off + j] += dscore * lc.q[t * D + off + j];
                    }
                }
            }
        }
        for (int t = 0; t < T; ++t) {
            double da[D] = {0.0};
            detail::outer_acc(g_wq, &dq[t * D], &lc.a[t * D]);
            detail::outer_acc(g_wk, &dk[t * D], &lc.a[t * D]);
            detail::outer_acc(g_wv, &dv[t * D], &lc.a[t * D]);
            detail::matvec_t_acc(wq, &dq[t * D], da);
            detail::matvec_t_acc(wk, &dk[t * D], da);
            detail::matvec_t_acc(wv, &dv[t * D], da);
            // Residual plus the norm branch feed the layer input.
            std::vector<double> dx_in(D, 0.0);
            detail::rmsnorm_bwd_acc(da, &lc.x_in[t * D], lc.inv1[t], dx_in.data(), D);
            for (int i = 0; i < D; ++i) dx[t * D + i] = dx_mid[t * D + i] + dx_in[i];
        }
    }

    for (int t = 0; t < T; ++t) {
        double* trow = g_tok.row_ptr(cache.tokens[t]);
        double* prow = g_pos.row_ptr(t);
        for (int i = 0; i < D; ++i) {
            trow[i] += dx[t * D + i];
            prow[i] += dx[t * D + i];
        }
    }
}

// Next-token distribution at the last position.
inline std::vector<double> next_token_probs(const PolicyModel& model, std::span<const int> tokens) {
    ForwardCache cache;
    forward(model, tokens, cache);
    const int t = cache.t_len - 1;
    return std::vector<double>(cache.probs.begin() + static_cast<size_t>(t) * ModelDims::vocab,
                               cache.probs.begin() + static_cast<size_t>(t + 1) * ModelDims::vocab);
}

// Greedy decode of the next token; ties resolve to the lowest id.
inline int greedy_token(const PolicyModel& model, std::span<const int> tokens) {
    const std::vector<double> probs = next_token_probs(model, tokens);
    int best = 0;
    for (int i = 1; i < ModelDims::vocab; ++i)
        if (probs[i] > probs[best]) best = i;
    return best;
}

inline Checkpoint to_checkpoint(const PolicyModel& model, const std::string& run_id, int64_t step,
                                uint64_t seed) {
    Checkpoint c;
    c.tensors = model.params;
    c.meta.run_id = run_id;
    c.meta.step = step;
    c.meta.seed = seed;
    return c;
}

inline PolicyModel from_checkpoint(const Checkpoint& ckpt) {
    PolicyModel m;
    m.params = ckpt.tensors;
    return m;
}

}  // namespace driftlab
