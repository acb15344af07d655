// Command-line front end: dataset generation, baseline pretraining, refinement
// training, evaluation, ablation grids, the gradient-check suite and run
// reports. Flags override config-file values; DPMN_THREADS is the fallback for
// --threads.

#include <iostream>

#include "CLI11.hpp"
#include "dpmn/harness.hpp"

using namespace dpmn;

namespace {

struct CommonFlags {
    std::string config, dataset, out, psn, suite;
    i64 seed = -1;
    double alpha = -1;
    int threads = -1;

    void attach(CLI::App* cmd, bool with_suite = false) {
        cmd->add_option("--config", config, "key = value config file");
        cmd->add_option("--dataset", dataset, "dataset directory");
        cmd->add_option("--out", out, "output directory");
        cmd->add_option("--psn", psn, "baseline checkpoint path");
        cmd->add_option("--seed", seed, "run seed");
        cmd->add_option("--alpha", alpha, "fusion ratio in [0,1]");
        cmd->add_option("--threads", threads, "worker threads (DPMN_THREADS as fallback)");
        if (with_suite) cmd->add_option("--suite", suite, "ablation suite name");
    }

    harness::RunConfig to_config(const std::vector<std::pair<std::string, std::string>>& extra) const {
        harness::RunConfig cfg;
        if (!config.empty()) cfg = harness::RunConfig::from_file(config);
        // explicit flags take precedence over the file
        if (!dataset.empty()) cfg.dataset = dataset;
        if (!out.empty()) cfg.out = out;
        if (!psn.empty()) cfg.psn_checkpoint = psn;
        if (seed >= 0) cfg.seed = static_cast<u64>(seed);
        if (alpha >= 0) cfg.net.alpha = alpha;
        if (threads >= 0) cfg.threads = threads;
        for (const auto& [k, v] : extra)
            if (!v.empty()) cfg.set_kv(k, v);
        cfg.apply_fixed_window();
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-prior text image super-resolution toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    std::string gen_out;
    i64 n_train = 2000, n_test = 200, gen_seed = 1;
    bool force = false;
    gen->add_option("--out", gen_out, "dataset directory")->required();
    gen->add_option("--n-train", n_train, "training samples");
    gen->add_option("--n-test-per-tier", n_test, "test samples per tier");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_flag("--force", force, "overwrite an existing directory");

    // train-psn
    auto* tpsn = app.add_subcommand("train-psn", "pretrain the baseline SR net");
    CommonFlags psn_flags;
    psn_flags.attach(tpsn);
    std::string psn_epochs, psn_batch, psn_lr, psn_limit;
    tpsn->add_option("--epochs", psn_epochs);
    tpsn->add_option("--batch", psn_batch);
    tpsn->add_option("--lr", psn_lr);
    tpsn->add_option("--train-limit", psn_limit);

    // train-dpmn
    auto* tdp = app.add_subcommand("train-dpmn", "train the refinement network");
    CommonFlags dp_flags;
    dp_flags.attach(tdp);
    std::string dp_epochs, dp_batch, dp_lr, dp_limit, dp_n, dp_windows, dp_branch, dp_strategy,
        dp_cmm, dp_oracle, dp_fixed;
    tdp->add_option("--epochs", dp_epochs);
    tdp->add_option("--batch", dp_batch);
    tdp->add_option("--lr", dp_lr);
    tdp->add_option("--train-limit", dp_limit);
    tdp->add_option("--n-pgrm", dp_n);
    tdp->add_option("--windows", dp_windows, "comma list, e.g. 2,4,8");
    tdp->add_option("--single-branch", dp_branch, "mask|graphic|concat|dual");
    tdp->add_option("--train-strategy", dp_strategy, "frozen|finetune|standalone");
    tdp->add_option("--cmm-variant", dp_cmm, "full|no_ca|unet_like|tsrn_like");
    tdp->add_option("--oracle-priors", dp_oracle, "1 = priors from HR images");
    tdp->add_option("--fixed-window", dp_fixed, "0|2|4|8");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate checkpoints over the test split");
    CommonFlags ev_flags;
    ev_flags.attach(ev);
    std::string ev_dpmn, ev_alphas, ev_limit, ev_strategy, ev_oracle;
    ev->add_option("--dpmn", ev_dpmn, "refinement checkpoint (omit for baseline-only)");
    ev->add_option("--alphas", ev_alphas, "comma list of fusion ratios");
    ev->add_option("--eval-limit", ev_limit);
    ev->add_option("--train-strategy", ev_strategy);
    ev->add_option("--oracle-priors", ev_oracle);

    // ablate
    auto* ab = app.add_subcommand("ablate", "run an ablation grid");
    CommonFlags ab_flags;
    ab_flags.attach(ab, /*with_suite=*/true);
    std::string ab_epochs, ab_batch, ab_limit, ab_eval_limit;
    ab->add_option("--epochs", ab_epochs);
    ab->add_option("--batch", ab_batch);
    ab->add_option("--train-limit", ab_limit);
    ab->add_option("--eval-limit", ab_eval_limit);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for every block");
    bool gc_quick = false;
    gc->add_flag("--quick", gc_quick, "sample fewer coordinates per tensor");

    // report
    auto* rp = app.add_subcommand("report", "print the artifacts of a finished run");
    std::string rp_run;
    rp->add_option("--run", rp_run, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            synth::build_dataset(n_train, n_test, static_cast<u64>(gen_seed), gen_out, force);
            std::cout << "wrote dataset to " << gen_out << "\n";
        } else if (*tpsn) {
            harness::RunConfig cfg = psn_flags.to_config({{"epochs", psn_epochs},
                                                          {"batch", psn_batch},
                                                          {"lr", psn_lr},
                                                          {"train_limit", psn_limit}});
            harness::train_psn(cfg, std::cout);
        } else if (*tdp) {
            harness::RunConfig cfg = dp_flags.to_config({{"epochs", dp_epochs},
                                                         {"batch", dp_batch},
                                                         {"lr", dp_lr},
                                                         {"train_limit", dp_limit},
                                                         {"n_pgrm", dp_n},
                                                         {"windows", dp_windows},
                                                         {"single_branch", dp_branch},
                                                         {"train_strategy", dp_strategy},
                                                         {"cmm_variant", dp_cmm},
                                                         {"oracle_priors", dp_oracle},
                                                         {"fixed_window", dp_fixed}});
            harness::train_dpmn(cfg, std::cout);
        } else if (*ev) {
            harness::RunConfig cfg = ev_flags.to_config({{"eval_alphas", ev_alphas},
                                                         {"eval_limit", ev_limit},
                                                         {"train_strategy", ev_strategy},
                                                         {"oracle_priors", ev_oracle}});
            harness::evaluate(cfg, ev_dpmn, std::cout);
        } else if (*ab) {
            if (ab_flags.suite.empty()) throw ConfigError("ablate needs --suite");
            harness::RunConfig cfg = ab_flags.to_config({{"epochs", ab_epochs},
                                                         {"batch", ab_batch},
                                                         {"train_limit", ab_limit},
                                                         {"eval_limit", ab_eval_limit}});
            harness::ablate(ab_flags.suite, cfg, std::cout);
        } else if (*gc) {
            harness::SuiteReport report = harness::gradcheck_suite(gc_quick, std::cout);
            return report.all_pass ? 0 : 1;
        } else if (*rp) {
            harness::report_run(rp_run, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
