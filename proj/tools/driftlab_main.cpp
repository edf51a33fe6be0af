// driftlab command-line entry point.
//
//   warmup        clean supervised warmup; writes checkpoints + trusted.tdgc
//   train         RL run (vanilla|tdga|sam|gradreg); metrics + checkpoints
//   analyze-drift CCA drift report between two checkpoints against a base
//   svd-report    per-matrix top singular values of a checkpoint delta
//   plot          proxy/true reward panels as standalone SVG

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "driftlab/ckptio.hpp"
#include "driftlab/geometry.hpp"
#include "driftlab/svd.hpp"
#include "driftlab/svg_plot.hpp"
#include "driftlab/trainer.hpp"

namespace {

std::string svd_report_csv(const driftlab::Checkpoint& base, const driftlab::Checkpoint& ckpt, int top) {
    const driftlab::NamedDelta d = driftlab::delta(ckpt, base);
    std::string out = "matrix,i,sigma\n";
    for (const auto& [name, dw] : d.entries) {
        const driftlab::SvdFactors f = driftlab::frob_norm(dw) == 0.0 ? driftlab::SvdFactors{}
                                                                      : driftlab::svd(dw);
        for (int i = 1; i <= top; ++i) {
            const double sigma = i <= f.rank ? f.sigmas[i - 1] : 0.0;
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.9g", sigma);
            out += name + "," + std::to_string(i) + "," + buf + "\n";
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"driftlab: update-direction geometry and trusted-direction RL tools"};
    app.require_subcommand(1);

    driftlab::TrainConfig cfg;
    std::string out_dir;
    std::string warmup_dir;
    bool force = false;
    std::string method = "vanilla";
    std::string optimizer = "sgd";

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
        cmd->add_option("--rank", cfg.rank, "trusted-subspace rank K")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--lr", cfg.lr, "RL learning rate (sgd)")->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--warmup-lr", cfg.warmup_lr, "supervised warmup learning rate (adam)")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--warmup-digit-cap", cfg.warmup_digit_cap,
                        "warmup corpus covers digits 0..cap-1 (skill stays partial below 10)")
            ->check(CLI::Range(2, 10))
            ->capture_default_str();
        cmd->add_option("--batch", cfg.batch_prompts, "prompts per step")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--ckpt-every", cfg.ckpt_every, "checkpoint cadence in steps")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--init-std", cfg.init_std, "weight init standard deviation")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--out", out_dir, "output run directory")->required();
        cmd->add_flag("--force", force, "allow writing into a non-empty directory");
    };

    CLI::App* warmup = app.add_subcommand("warmup", "clean supervised warmup phase");
    add_common(warmup);
    warmup->add_option("--steps", cfg.warmup_steps, "supervised steps")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    CLI::App* train = app.add_subcommand("train", "policy-gradient RL run");
    add_common(train);
    train->add_option("--method", method, "vanilla|tdga|sam|gradreg")->capture_default_str();
    train->add_option("--steps", cfg.steps, "RL steps")->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--kl-coeff", cfg.kl_coeff, "KL penalty coefficient")->capture_default_str();
    train->add_option("--warmup-steps", cfg.warmup_steps, "supervised steps when auto-running warmup")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--rollouts", cfg.rollouts, "rollouts per prompt")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--sam-rho", cfg.sam_rho, "SAM perturbation radius")->capture_default_str();
    train->add_option("--gradreg-lambda", cfg.gradreg_lambda, "gradient-regularization weight")
        ->capture_default_str();
    train->add_option("--loophole-fraction", cfg.loophole_fraction, "fraction of training prompts carrying the hint")
        ->capture_default_str();
    train->add_option("--optimizer", optimizer, "sgd|adam (projected updates stay in-subspace only under sgd)")
        ->capture_default_str();
    train->add_option("--warmup-dir", warmup_dir, "existing warmup run directory (auto-runs warmup when omitted)");
    train->add_flag("--unweighted", cfg.unweighted, "project without singular-value weighting (ablation)");

    std::string base_path, ckpt_a, ckpt_b, ckpt_path, out_file;
    int cca_k = 1;
    int top_n = 10;
    CLI::App* drift = app.add_subcommand("analyze-drift", "CCA drift report between two checkpoints");
    drift->add_option("--base", base_path, "base checkpoint (the run's starting parameters)")->required();
    drift->add_option("--ckpt-a", ckpt_a, "first checkpoint")->required();
    drift->add_option("--ckpt-b", ckpt_b, "second checkpoint")->required();
    drift->add_option("--k", cca_k, "CCA rank")->check(CLI::PositiveNumber)->capture_default_str();
    drift->add_option("--out", out_file, "output CSV path")->required();

    CLI::App* svdrep = app.add_subcommand("svd-report", "top singular values of a checkpoint delta");
    svdrep->add_option("--base", base_path, "base checkpoint")->required();
    svdrep->add_option("--ckpt", ckpt_path, "checkpoint to diff against the base")->required();
    svdrep->add_option("--top", top_n, "singular values per matrix (zero-padded past the rank)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    svdrep->add_option("--out", out_file, "output CSV path")->required();

    std::vector<std::string> metrics_paths;
    CLI::App* plot = app.add_subcommand("plot", "render proxy/true reward panels as SVG");
    plot->add_option("--metrics", metrics_paths, "metrics.csv paths, one series each")
        ->required()
        ->expected(-1);
    plot->add_option("--out", out_file, "output SVG path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(warmup)) {
            driftlab::run_warmup_dir(cfg, out_dir, force);
            std::printf("warmup complete: %s\n", out_dir.c_str());
        } else if (app.got_subcommand(train)) {
            cfg.method = driftlab::method_from_name(method);
            if (optimizer == "sgd")
                cfg.optimizer = driftlab::Optimizer::sgd;
            else if (optimizer == "adam")
                cfg.optimizer = driftlab::Optimizer::adam;
            else
                throw std::invalid_argument("unknown optimizer: " + optimizer + " (expected sgd|adam)");
            driftlab::run_train_dir(cfg, out_dir, warmup_dir, force);
            std::printf("train complete: %s\n", out_dir.c_str());
        } else if (app.got_subcommand(drift)) {
            const driftlab::Checkpoint base = driftlab::load_checkpoint(base_path);
            const driftlab::Checkpoint a = driftlab::load_checkpoint(ckpt_a);
            const driftlab::Checkpoint b = driftlab::load_checkpoint(ckpt_b);
            const driftlab::DriftReport rep = driftlab::drift_report(base, a, b, cca_k);
            driftlab::write_text_file(out_file, driftlab::drift_report_csv(rep));
            for (const auto& fam : driftlab::module_families()) {
                auto it = rep.per_module_mean.find(fam);
                if (it != rep.per_module_mean.end())
                    std::printf("%-10s mean %.6f  worst %.6f\n", fam.c_str(), it->second,
                                rep.per_module_worst.at(fam));
            }
            std::printf("drift report written: %s\n", out_file.c_str());
        } else if (app.got_subcommand(svdrep)) {
            const driftlab::Checkpoint base = driftlab::load_checkpoint(base_path);
            const driftlab::Checkpoint ckpt = driftlab::load_checkpoint(ckpt_path);
            driftlab::write_text_file(out_file, svd_report_csv(base, ckpt, top_n));
            std::printf("svd report written: %s\n", out_file.c_str());
        } else if (app.got_subcommand(plot)) {
            driftlab::plot_metrics(metrics_paths, out_file);
            std::printf("plot written: %s\n", out_file.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
