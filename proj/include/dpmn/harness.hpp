#pragma once

#include <iosfwd>
#include <optional>

#include "dpmn/gradcheck.hpp"
#include "dpmn/losses.hpp"
#include "dpmn/metrics.hpp"
#include "dpmn/model.hpp"
#include "dpmn/synthdata.hpp"

// Experiment orchestration: run configuration (file + flag overrides),
// training loops for the baseline net and the refinement network, evaluation
// with fusion sweeps, the ablation grids and the gradient-check suite.

namespace dpmn::harness {

struct RunConfig {
    std::string dataset;
    std::string out;
    std::string psn_checkpoint;
    i64 epochs = 20;
    i64 batch = 16;
    double lr = 0.001;
    u64 seed = 1;
    int threads = 0;  // 0 = resolve from DPMN_THREADS, else 1
    net::NetConfig net;
    loss::LossWeights weights;
    bool oracle_priors = false;
    net::BranchMode branch_mode = net::BranchMode::dual;
    int fixed_window = 0;  // 0 = dynamic; 2/4/8 fix one window size and disable the gate
    net::CmmVariant cmm_variant = net::CmmVariant::full;
    net::PsnStrategy strategy = net::PsnStrategy::frozen;
    i64 train_limit = 0;   // 0 = whole split; otherwise cap samples per epoch
    i64 eval_limit = 0;
    std::vector<double> eval_alphas = {0.0, 0.25, 0.5, 0.75, 1.0};

    void validate() const;
    void apply_fixed_window();  // rewrites net.window_sizes when fixed_window != 0

    // canonical key=value text (sorted keys); its FNV-1a hash stamps artifacts
    std::string canonical() const;
    u64 hash() const { return fnv1a(canonical()); }

    static RunConfig from_file(const std::string& path);
    void set_kv(const std::string& key, const std::string& value);
};

int resolve_threads(int flag_value);  // flag > env DPMN_THREADS > default 1

struct RunReport {
    std::vector<double> epoch_losses;
    double wall_seconds = 0;
    std::string checkpoint_path;
    std::string config_echo;
};

// Trains the baseline SR net with the image loss, writes checkpoint+manifest
// (marked frozen) and a report into cfg.out.
RunReport train_psn(const RunConfig& cfg, std::ostream& log);

// Trains the refinement network on top of a (frozen) baseline per the
// configured strategy; writes dpmn.ckpt, loss curve and report.
RunReport train_dpmn(const RunConfig& cfg, std::ostream& log);

struct TierMetrics {
    std::string tier;  // easy/medium/hard/all
    double psnr = 0, ssim = 0, accuracy = 0;
    i64 n = 0;
};

struct SystemEval {
    std::string system;  // bicubic | psn | dpmn@a=...
    double alpha = 0;
    std::vector<TierMetrics> tiers;

    const TierMetrics& overall() const;
    const TierMetrics& tier(const std::string& name) const;
};

struct EvalResult {
    std::vector<SystemEval> systems;
    std::string csv_path;
};

// Evaluates bicubic, baseline-only and baseline+refinement at each alpha over
// the test split; emits metrics CSV and a qualitative image grid.
EvalResult evaluate(const RunConfig& cfg, const std::string& dpmn_checkpoint, std::ostream& log);

// Named ablation grid with shared seed/dataset; one CSV row per cell, resumable
// through per-cell markers keyed by the base config hash.
struct AblationCell {
    std::string suite, cell;
    SystemEval eval;      // at the suite's evaluation alpha
    double train_seconds = 0;
};

std::vector<AblationCell> ablate(const std::string& suite, const RunConfig& base, std::ostream& log);

// Gradient-check suite over every block and loss at toy shapes (fp64).
struct SuiteEntry {
    std::string name;
    double max_rel = 0;
    double tol = 1e-4;
    i64 coords = 0;
    bool pass = false;
};

struct SuiteReport {
    std::vector<SuiteEntry> entries;
    bool all_pass = false;
    double wall_seconds = 0;
};

SuiteReport gradcheck_suite(bool quick, std::ostream& log);

// Plain-text summary of a finished run directory.
void report_run(const std::string& run_dir, std::ostream& os);

// csv helpers shared by eval/ablate
void write_metrics_csv(const std::string& path, u64 config_hash,
                       const std::vector<std::pair<std::string, std::vector<TierMetrics>>>& rows);

}  // namespace dpmn::harness
