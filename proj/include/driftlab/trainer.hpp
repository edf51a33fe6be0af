// Desk-scale training harness: clean supervised warmup, group-relative
// policy-gradient RL against the loophole proxy reward, and the four update
// methods (vanilla, tdga, sam, gradreg). Every random draw comes from a
// counter-based stream keyed by (seed, phase, step, slot), so a fixed config
// reproduces metrics and checkpoints byte-for-byte.
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftlab/ckptio.hpp"
#include "driftlab/geometry.hpp"
#include "driftlab/model.hpp"
#include "driftlab/parallel.hpp"
#include "driftlab/projection.hpp"
#include "driftlab/task.hpp"

namespace driftlab {

enum class Method { vanilla, tdga, sam, gradreg };
enum class Optimizer { sgd, adam };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::vanilla: return "vanilla";
        case Method::tdga: return "tdga";
        case Method::sam: return "sam";
        case Method::gradreg: return "gradreg";
    }
    return "?";
}

inline Method method_from_name(const std::string& s) {
    if (s == "vanilla") return Method::vanilla;
    if (s == "tdga") return Method::tdga;
    if (s == "sam") return Method::sam;
    if (s == "gradreg") return Method::gradreg;
    throw std::invalid_argument("unknown method: " + s + " (expected vanilla|tdga|sam|gradreg)");
}

struct TrainConfig {
    Method method = Method::vanilla;
    int rank = 1;
    double lr = 6.5e-3;       // RL step size; SGD needs this scale to reach the
                              // hacking regime within a few hundred steps
    double warmup_lr = 1e-3;  // supervised phase (adam)
    double kl_coeff = 1e-3;
    int steps = 400;
    int warmup_steps = 20;
    int rollouts = 8;
    int batch_prompts = 32;
    uint64_t seed = 7;
    int ckpt_every = 10;
    double sam_rho = 0.05;
    double gradreg_lambda = 0.1;
    bool unweighted = false;          // ablation: drop the singular-value weighting
    Optimizer optimizer = Optimizer::sgd;  // RL optimizer; adam exists behind a flag
                                           // but projected updates are only guaranteed
                                           // to stay in-subspace under plain sgd
    int n_train = 2048;
    int n_eval = 512;
    double loophole_fraction = 1.0;
    int warmup_digit_cap = 8;  // warmup corpus covers digits 0..cap-1 only, so the
                               // model's skill stays partial on the full task
    double init_std = 0.1;

    void validate() const {
        if (rank < 1) throw std::invalid_argument("config: rank must be positive");
        if (lr <= 0 || warmup_lr <= 0 || kl_coeff < 0)
            throw std::invalid_argument("config: learning rates must be positive, kl_coeff non-negative");
        if (warmup_digit_cap < 2 || warmup_digit_cap > 10)
            throw std::invalid_argument("config: warmup_digit_cap must be in [2,10]");
        if (steps < 1 || warmup_steps < 1) throw std::invalid_argument("config: steps and warmup_steps must be positive");
        if (rollouts < 2) throw std::invalid_argument("config: need at least 2 rollouts per prompt");
        if (batch_prompts < 1 || ckpt_every < 1) throw std::invalid_argument("config: batch and cadence must be positive");
        if (sam_rho <= 0 || gradreg_lambda <= 0) throw std::invalid_argument("config: sam_rho and gradreg_lambda must be positive");
        if (n_train < 1 || n_eval < 1) throw std::invalid_argument("config: dataset sizes must be positive");
        if (loophole_fraction < 0.0 || loophole_fraction > 1.0)
            throw std::invalid_argument("config: loophole_fraction outside [0,1]");
    }

    nlohmann::json to_json() const {
        return {{"method", method_name(method)},
                {"rank", rank},
                {"lr", lr},
                {"warmup_lr", warmup_lr},
                {"kl_coeff", kl_coeff},
                {"steps", steps},
                {"warmup_steps", warmup_steps},
                {"rollouts", rollouts},
                {"batch_prompts", batch_prompts},
                {"seed", seed},
                {"ckpt_every", ckpt_every},
                {"sam_rho", sam_rho},
                {"gradreg_lambda", gradreg_lambda},
                {"unweighted", unweighted},
                {"optimizer", optimizer == Optimizer::sgd ? "sgd" : "adam"},
                {"n_train", n_train},
                {"n_eval", n_eval},
                {"loophole_fraction", loophole_fraction},
                {"warmup_digit_cap", warmup_digit_cap},
                {"init_std", init_std}};
    }
};

struct RolloutBatch {
    std::vector<TaskInstance> prompts;           // G instances
    std::vector<std::vector<int>> completions;   // G x n sampled answer tokens
    std::vector<std::vector<double>> logprobs;   // behavior log-probabilities at sampling time
    std::vector<std::vector<double>> rewards;    // G x n in {0,1}
};

// Group-relative advantages: (r - mean) / (population std + 1e-6).
inline std::vector<double> group_advantages(std::span<const double> rewards) {
    const size_t n = rewards.size();
    if (n < 2) throw std::invalid_argument("group_advantages: need at least 2 rollouts");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(n);
    const double denom = std::sqrt(var) + 1e-6;
    std::vector<double> a(n);
    for (size_t i = 0; i < n; ++i) a[i] = (rewards[i] - mean) / denom;
    return a;
}

struct LossGrads {
    double loss = 0.0;
    double kl = 0.0;  // mean per-prompt KL(pi || pi_ref) at the answer position
    std::map<std::string, Mat> grads;
};

// loss = -E[a_i log pi(c_i)] + kl_coeff * mean_g KL(pi || pi_ref), with both
// terms taken at the single completion position. Gradients cover every named
// tensor; accumulation order is fixed (prompt 0..G-1), so the result is
// deterministic.
inline LossGrads rl_loss(const PolicyModel& policy, const PolicyModel& reference, const RolloutBatch& batch,
                         double kl_coeff) {
    constexpr int V = ModelDims::vocab;
    const int g_count = static_cast<int>(batch.prompts.size());
    if (g_count == 0) throw std::invalid_argument("rl_loss: empty batch");

    LossGrads out;
    out.grads = zero_like_params(policy);
    double loss_pg = 0.0;
    double kl_sum = 0.0;
    int total_rollouts = 0;
    for (const auto& c : batch.completions) total_rollouts += static_cast<int>(c.size());
    if (total_rollouts == 0) throw std::invalid_argument("rl_loss: no completions");

    ForwardCache cache;
    for (int g = 0; g < g_count; ++g) {
        const std::vector<int> prompt = batch.prompts[g].prompt();
        forward(policy, prompt, cache);
        const int last = cache.t_len - 1;
        const double* probs = &cache.probs[static_cast<size_t>(last) * V];
        const std::vector<double> ref_probs = next_token_probs(reference, prompt);

        const std::vector<double> adv = group_advantages(batch.rewards[g]);
        std::vector<double> dlogits(static_cast<size_t>(cache.t_len) * V, 0.0);
        double* dl = &dlogits[static_cast<size_t>(last) * V];

        const double pg_scale = 1.0 / static_cast<double>(total_rollouts);
        for (size_t i = 0; i < batch.completions[g].size(); ++i) {
            const int c = batch.completions[g][i];
            loss_pg += -adv[i] * std::log(probs[c]);
            for (int v = 0; v < V; ++v)
                dl[v] += -adv[i] * ((v == c ? 1.0 : 0.0) - probs[v]) * pg_scale;
        }

        double kl_g = 0.0;
        for (int v = 0; v < V; ++v) kl_g += probs[v] * (std::log(probs[v]) - std::log(ref_probs[v]));
        kl_sum += kl_g;
        if (kl_coeff != 0.0) {
            const double kl_scale = kl_coeff / static_cast<double>(g_count);
            for (int v = 0; v < V; ++v)
                dl[v] += kl_scale * probs[v] * ((std::log(probs[v]) - std::log(ref_probs[v])) - kl_g);
        }

        backward(policy, cache, dlogits, out.grads);
    }

    out.kl = kl_sum / static_cast<double>(g_count);
    out.loss = loss_pg / static_cast<double>(total_rollouts) + kl_coeff * out.kl;
    if (!std::isfinite(out.loss)) throw std::runtime_error("rl_loss: non-finite loss; aborting step");
    return out;
}

// Supervised cross-entropy on the correct answer token, mean over the batch.
inline LossGrads supervised_loss(const PolicyModel& policy, const std::vector<TaskInstance>& batch) {
    constexpr int V = ModelDims::vocab;
    if (batch.empty()) throw std::invalid_argument("supervised_loss: empty batch");
    LossGrads out;
    out.grads = zero_like_params(policy);
    const double scale = 1.0 / static_cast<double>(batch.size());

    ForwardCache cache;
    for (const auto& inst : batch) {
        const std::vector<int> prompt = inst.prompt();
        forward(policy, prompt, cache);
        const int last = cache.t_len - 1;
        const double* probs = &cache.probs[static_cast<size_t>(last) * V];
        out.loss += -std::log(probs[inst.answer]) * scale;
        std::vector<double> dlogits(static_cast<size_t>(cache.t_len) * V, 0.0);
        double* dl = &dlogits[static_cast<size_t>(last) * V];
        for (int v = 0; v < V; ++v) dl[v] = (probs[v] - (v == inst.answer ? 1.0 : 0.0)) * scale;
        backward(policy, cache, dlogits, out.grads);
    }
    if (!std::isfinite(out.loss)) throw std::runtime_error("supervised_loss: non-finite loss");
    return out;
}

inline double global_grad_norm(const std::map<std::string, Mat>& grads) {
    double s = 0.0;
    for (const auto& [name, g] : grads)
        for (double v : g.data) s += v * v;
    return std::sqrt(s);
}

inline void sgd_step(PolicyModel& model, const std::map<std::string, Mat>& grads, double lr) {
    for (auto& [name, p] : model.params) {
        const Mat& g = grads.at(name);
        for (size_t i = 0; i < p.data.size(); ++i) p.data[i] -= lr * g.data[i];
    }
}

struct AdamState {
    std::map<std::string, Mat> m, v;
    int64_t t = 0;

    static AdamState like(const PolicyModel& model) {
        AdamState s;
        s.m = zero_like_params(model);
        s.v = zero_like_params(model);
        return s;
    }

    void step(PolicyModel& model, const std::map<std::string, Mat>& grads, double lr) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (auto& [name, p] : model.params) {
            const Mat& g = grads.at(name);
            Mat& mm = m.at(name);
            Mat& vv = v.at(name);
            for (size_t i = 0; i < p.data.size(); ++i) {
                mm.data[i] = b1 * mm.data[i] + (1.0 - b1) * g.data[i];
                vv.data[i] = b2 * vv.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
                p.data[i] -= lr * (mm.data[i] / c1) / (std::sqrt(vv.data[i] / c2) + eps);
            }
        }
    }
};

// Fresh loophole-free instances for one warmup step. The warmup corpus only
// covers digits below digit_cap; the held-out digits keep the model's skill
// partial under full-distribution evaluation.
inline std::vector<TaskInstance> warmup_batch(uint64_t seed, int step, int count, int digit_cap) {
    std::vector<TaskInstance> batch;
    batch.reserve(count);
    for (int i = 0; i < count; ++i) {
        RandomStream rng{seed, 0x7761726DULL, static_cast<uint64_t>(step), static_cast<uint64_t>(i)};
        TaskInstance inst;
        for (int& d : inst.digits) d = static_cast<int>(rng.next_below(static_cast<uint64_t>(digit_cap)));
        inst.answer = parity_answer(inst.digits);
        inst.loophole = false;
        batch.push_back(inst);
    }
    return batch;
}

struct WarmupArtifacts {
    PolicyModel init_model;
    PolicyModel end_model;
    TrustedProjector projector;
};

// Clean-data supervised warmup from the seeded initialization; the trusted
// projector is fitted to the full warmup delta and frozen. The supervised
// phase runs adam: plain sgd cannot crack the parity circuit at this scale,
// and the in-subspace guarantee only matters for the projected RL phase.
// The optional callback sees the model after every step (used for cadence
// checkpoints).
inline WarmupArtifacts warmup(const TrainConfig& cfg,
                              const std::function<void(int, const PolicyModel&)>& on_step = nullptr) {
    cfg.validate();
    WarmupArtifacts art;
    art.init_model = PolicyModel::init(cfg.seed, cfg.init_std);
    PolicyModel model = art.init_model;
    AdamState adam = AdamState::like(model);
    for (int step = 1; step <= cfg.warmup_steps; ++step) {
        const LossGrads lg =
            supervised_loss(model, warmup_batch(cfg.seed, step, cfg.batch_prompts, cfg.warmup_digit_cap));
        adam.step(model, lg.grads, cfg.warmup_lr);
        if (!model.finite()) throw std::runtime_error("warmup: parameters became non-finite at step " + std::to_string(step));
        if (on_step) on_step(step, model);
    }
    art.end_model = model;

    const Checkpoint c0 = to_checkpoint(art.init_model, "warmup", 0, cfg.seed);
    const Checkpoint c1 = to_checkpoint(art.end_model, "warmup", cfg.warmup_steps, cfg.seed);
    art.projector = fit_trusted(delta(c1, c0), cfg.rank);
    art.projector.source_run_id = "warmup-seed" + std::to_string(cfg.seed);
    return art;
}

// Samples one prompt's rollout group from the policy's answer distribution.
// The stream is keyed by (seed, step, prompt slot, rollout), so results do
// not depend on how prompts are spread over workers.
inline void sample_rollouts(const PolicyModel& policy, const TaskInstance& inst, uint64_t seed, int step,
                            int prompt_slot, int n, std::vector<int>& completions,
                            std::vector<double>& logprobs, std::vector<double>& rewards) {
    const std::vector<double> probs = next_token_probs(policy, inst.prompt());
    completions.resize(n);
    logprobs.resize(n);
    rewards.resize(n);
    for (int i = 0; i < n; ++i) {
        RandomStream rng{seed, static_cast<uint64_t>(step), static_cast<uint64_t>(prompt_slot),
                         static_cast<uint64_t>(i)};
        const double u = rng.next_double();
        double cdf = 0.0;
        int tok = ModelDims::vocab - 1;
        for (int v = 0; v < ModelDims::vocab; ++v) {
            cdf += probs[v];
            if (u < cdf) {
                tok = v;
                break;
            }
        }
        completions[i] = tok;
        logprobs[i] = std::log(probs[tok]);
        rewards[i] = proxy_reward(tok, inst);
    }
}

struct StepMetrics {
    int step = 0;
    double proxy_reward = 0.0;
    double true_reward = 0.0;
    double kl = 0.0;
    double grad_norm = 0.0;
    double loophole_copy_rate = 0.0;
};

namespace detail {
inline std::string fmt_g6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}
}  // namespace detail

inline std::string metrics_header() {
    return "step,method,rank,proxy_reward,true_reward,kl,grad_norm,loophole_copy_rate\n";
}

inline std::string metrics_row(const StepMetrics& m, const TrainConfig& cfg) {
    return std::to_string(m.step) + "," + method_name(cfg.method) + "," + std::to_string(cfg.rank) + "," +
           detail::fmt_g6(m.proxy_reward) + "," + detail::fmt_g6(m.true_reward) + "," + detail::fmt_g6(m.kl) +
           "," + detail::fmt_g6(m.grad_norm) + "," + detail::fmt_g6(m.loophole_copy_rate) + "\n";
}

// One RL training run. Writes metrics.csv and cadence checkpoints under
// out_dir (which must already contain config.json; see run_train_dir), and
// returns the final policy.
inline PolicyModel train(const TrainConfig& cfg, const std::string& out_dir, const WarmupArtifacts& art) {
    cfg.validate();
    const std::string run_id = method_name(cfg.method) + "-k" + std::to_string(cfg.rank) + "-seed" +
                               std::to_string(cfg.seed);

    TrustedProjector projector;
    if (cfg.method == Method::tdga) {
        if (art.projector.rank < cfg.rank)
            throw std::runtime_error("train: trusted projector has rank " + std::to_string(art.projector.rank) +
                                     " but the run needs " + std::to_string(cfg.rank) +
                                     "; re-run warmup with a larger --rank");
        projector = art.projector.rank == cfg.rank ? art.projector : truncate_projector(art.projector, cfg.rank);
    }

    const Dataset ds = make_dataset(cfg.seed, cfg.n_train, cfg.n_eval, cfg.loophole_fraction);
    const std::vector<CopyProbe> probes = make_copy_probes(ds.eval);

    PolicyModel policy = art.end_model;
    const PolicyModel& reference = art.end_model;
    AdamState adam = AdamState::like(policy);

    std::filesystem::create_directories(std::filesystem::path(out_dir) / "ckpt");
    save_checkpoint((std::filesystem::path(out_dir) / "ckpt" / "step-0.tdgc").string(),
                    to_checkpoint(policy, run_id, 0, cfg.seed));

    std::ofstream metrics(std::filesystem::path(out_dir) / "metrics.csv", std::ios::trunc);
    if (!metrics) throw std::runtime_error("train: cannot open metrics.csv under " + out_dir);
    metrics << metrics_header();
    metrics.flush();

    RolloutBatch batch;
    for (int step = 1; step <= cfg.steps; ++step) {
        // Assemble the step's prompts and rollouts.
        RandomStream pick{cfg.seed, 0x62617463ULL, static_cast<uint64_t>(step)};
        batch.prompts.resize(cfg.batch_prompts);
        batch.completions.assign(cfg.batch_prompts, {});
        batch.logprobs.assign(cfg.batch_prompts, {});
        batch.rewards.assign(cfg.batch_prompts, {});
        for (int g = 0; g < cfg.batch_prompts; ++g)
            batch.prompts[g] = ds.train[pick.next_below(static_cast<uint64_t>(ds.train.size()))];
        parallel_for(static_cast<size_t>(cfg.batch_prompts), [&](size_t g) {
            sample_rollouts(policy, batch.prompts[g], cfg.seed, step, static_cast<int>(g), cfg.rollouts,
                            batch.completions[g], batch.logprobs[g], batch.rewards[g]);
        });

        const LossGrads lg = rl_loss(policy, reference, batch, cfg.kl_coeff);
        const double raw_norm = global_grad_norm(lg.grads);

        // Method dispatch decides what the optimizer consumes.
        std::map<std::string, Mat> effective;
        switch (cfg.method) {
            case Method::vanilla:
                effective = lg.grads;
                break;
            case Method::tdga: {
                effective = lg.grads;
                for (const auto& name : PolicyModel::layer_matrix_names()) {
                    const TrustedEntry& entry = projector.per_matrix.at(name);
                    if (cfg.unweighted) {
                        const Mat coeffs = matmul_at_b(entry.u_clean, effective.at(name));
                        effective.at(name) = matmul(entry.u_clean, coeffs);
                    } else {
                        effective.at(name) = project_gradient(effective.at(name), entry);
                    }
                }
                break;
            }
            case Method::sam: {
                // Gradient taken at the adversarially perturbed point W + rho*g/|g|.
                if (raw_norm > 0.0) {
                    PolicyModel shifted = policy;
                    const double c = cfg.sam_rho / raw_norm;
                    for (auto& [name, p] : shifted.params) {
                        const Mat& g = lg.grads.at(name);
                        for (size_t i = 0; i < p.data.size(); ++i) p.data[i] += c * g.data[i];
                    }
                    effective = rl_loss(shifted, reference, batch, cfg.kl_coeff).grads;
                } else {
                    effective = lg.grads;
                }
                break;
            }
            case Method::gradreg: {
                // Penalty direction approximated by a finite difference of the
                // gradient field along g: (g(W + eps*g/|g|) - g(W)) * |g| / eps.
                effective = lg.grads;
                if (raw_norm > 0.0) {
                    constexpr double eps = 1e-3;
                    PolicyModel shifted = policy;
                    const double c = eps / raw_norm;
                    for (auto& [name, p] : shifted.params) {
                        const Mat& g = lg.grads.at(name);
                        for (size_t i = 0; i < p.data.size(); ++i) p.data[i] += c * g.data[i];
                    }
                    const LossGrads lg2 = rl_loss(shifted, reference, batch, cfg.kl_coeff);
                    const double w = cfg.gradreg_lambda * raw_norm / eps;
                    for (auto& [name, e] : effective) {
                        const Mat& g2 = lg2.grads.at(name);
                        const Mat& g1 = lg.grads.at(name);
                        for (size_t i = 0; i < e.data.size(); ++i) e.data[i] += w * (g2.data[i] - g1.data[i]);
                    }
                }
                break;
            }
        }

        if (cfg.optimizer == Optimizer::sgd)
            sgd_step(policy, effective, cfg.lr);
        else
            adam.step(policy, effective, cfg.lr);
        if (!policy.finite())
            throw std::runtime_error("train: parameters became non-finite at step " + std::to_string(step) +
                                     "; last good checkpoint retained under " + out_dir);

        StepMetrics m;
        m.step = step;
        double reward_sum = 0.0;
        int reward_count = 0;
        for (const auto& rs : batch.rewards)
            for (double r : rs) {
                reward_sum += r;
                ++reward_count;
            }
        m.proxy_reward = reward_sum / static_cast<double>(reward_count);
        m.kl = lg.kl;
        m.grad_norm = raw_norm;
        m.true_reward = true_reward(policy, ds.eval);
        m.loophole_copy_rate = loophole_copy_rate(policy, probes);
        metrics << metrics_row(m, cfg);
        metrics.flush();

        if (step % cfg.ckpt_every == 0)
            save_checkpoint((std::filesystem::path(out_dir) / "ckpt" / ("step-" + std::to_string(step) + ".tdgc")).string(),
                            to_checkpoint(policy, run_id, step, cfg.seed));
    }
    return policy;
}

// --- run-directory orchestration shared by the CLI and the test suites ---

inline void prepare_run_dir(const std::string& out_dir, bool force) {
    const std::filesystem::path p(out_dir);
    if (std::filesystem::exists(p) && !std::filesystem::is_empty(p) && !force)
        throw std::runtime_error(out_dir + " exists and is not empty (pass --force to overwrite)");
    std::filesystem::create_directories(p);
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed for " + path);
}

// Warmup run: ckpt/step-0.tdgc (initialization), cadence checkpoints,
// ckpt/warmup-end.tdgc, and trusted.tdgc. With --steps beyond the default
// this doubles as the clean supervised run for drift analysis.
inline WarmupArtifacts run_warmup_dir(const TrainConfig& cfg, const std::string& out_dir, bool force) {
    cfg.validate();
    prepare_run_dir(out_dir, force);
    write_text_file((std::filesystem::path(out_dir) / "config.json").string(), cfg.to_json().dump(2) + "\n");

    const std::string run_id = "warmup-seed" + std::to_string(cfg.seed);
    const std::filesystem::path ckpt_dir = std::filesystem::path(out_dir) / "ckpt";
    std::filesystem::create_directories(ckpt_dir);

    const WarmupArtifacts art = warmup(cfg, [&](int step, const PolicyModel& model) {
        if (step % cfg.ckpt_every == 0)
            save_checkpoint((ckpt_dir / ("step-" + std::to_string(step) + ".tdgc")).string(),
                            to_checkpoint(model, run_id, step, cfg.seed));
    });
    save_checkpoint((ckpt_dir / "step-0.tdgc").string(), to_checkpoint(art.init_model, run_id, 0, cfg.seed));
    save_checkpoint((ckpt_dir / "warmup-end.tdgc").string(),
                    to_checkpoint(art.end_model, run_id, cfg.warmup_steps, cfg.seed));
    save_projector((std::filesystem::path(out_dir) / "trusted.tdgc").string(), art.projector, cfg.seed);
    return art;
}

// Train run: resolves warmup artifacts (loading them from warmup_dir when
// given, otherwise auto-running a warmup under out_dir/warmup), then trains.
inline PolicyModel run_train_dir(const TrainConfig& cfg, const std::string& out_dir,
                                 const std::string& warmup_dir, bool force) {
    cfg.validate();
    prepare_run_dir(out_dir, force);
    write_text_file((std::filesystem::path(out_dir) / "config.json").string(), cfg.to_json().dump(2) + "\n");

    WarmupArtifacts art;
    if (!warmup_dir.empty()) {
        const std::filesystem::path wd(warmup_dir);
        const std::string trusted = (wd / "trusted.tdgc").string();
        const std::string end = (wd / "ckpt" / "warmup-end.tdgc").string();
        if (!std::filesystem::exists(trusted) || !std::filesystem::exists(end))
            throw std::runtime_error(warmup_dir + " is missing trusted.tdgc or ckpt/warmup-end.tdgc; run `driftlab warmup` first");
        art.projector = load_projector(trusted);
        art.end_model = from_checkpoint(load_checkpoint(end));
        const std::string init = (wd / "ckpt" / "step-0.tdgc").string();
        if (std::filesystem::exists(init)) art.init_model = from_checkpoint(load_checkpoint(init));
        std::filesystem::copy_file(trusted, std::filesystem::path(out_dir) / "trusted.tdgc",
                                   std::filesystem::copy_options::overwrite_existing);
    } else {
        art = run_warmup_dir(cfg, (std::filesystem::path(out_dir) / "warmup").string(), true);
        std::filesystem::copy_file(std::filesystem::path(out_dir) / "warmup" / "trusted.tdgc",
                                   std::filesystem::path(out_dir) / "trusted.tdgc",
                                   std::filesystem::copy_options::overwrite_existing);
    }
    return train(cfg, out_dir, art);
}

}  // namespace driftlab
