#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dpmn/harness.hpp"
#include "test_util.hpp"

using namespace dpmn;
using namespace dpmn::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

// one tiny dataset shared by the training tests
const std::string& tiny_dataset() {
    static std::string dir = [] {
        std::string d = testutil::tmp_dir("harness_ds");
        synth::build_dataset(24, 6, 424242, d, true);
        return d;
    }();
    return dir;
}

RunConfig tiny_run(const std::string& out) {
    RunConfig cfg;
    cfg.dataset = tiny_dataset();
    cfg.out = out;
    cfg.epochs = 1;
    cfg.batch = 8;
    cfg.seed = 3;
    cfg.net.n_pgrm = 1;
    cfg.eval_alphas = {0.0, 0.5, 1.0};
    return cfg;
}

}  // namespace

TEST_CASE("config files parse with flag-style overrides and stable hashes") {
    const std::string dir = testutil::tmp_dir("harness_cfg");
    {
        std::ofstream os(dir + "/run.cfg");
        os << "# comment line\n"
           << "epochs = 5\n"
           << "windows = 2,4\n"
           << "heads = 4\n"
           << "alpha = 0.75\n"
           << "single_branch = mask\n"
           << "cmm_variant = no_ca\n"
           << "train_strategy = standalone\n";
    }
    RunConfig cfg = RunConfig::from_file(dir + "/run.cfg");
    CHECK(cfg.epochs == 5);
    CHECK(cfg.net.window_sizes == std::vector<int>{2, 4});
    CHECK(cfg.net.heads == 4);
    CHECK(cfg.net.alpha == 0.75);
    CHECK(cfg.branch_mode == net::BranchMode::mask_only);
    CHECK(cfg.cmm_variant == net::CmmVariant::no_ca);
    CHECK(cfg.strategy == net::PsnStrategy::standalone);

    const u64 h0 = cfg.hash();
    cfg.set_kv("epochs", "6");  // CLI-style override changes the hash
    CHECK(cfg.hash() != h0);
    cfg.set_kv("epochs", "5");
    CHECK(cfg.hash() == h0);

    CHECK_THROWS_AS(cfg.set_kv("not_a_key", "1"), ConfigError);
    {
        std::ofstream os(dir + "/bad.cfg");
        os << "epochs 5\n";
    }
    CHECK_THROWS_AS(RunConfig::from_file(dir + "/bad.cfg"), ConfigError);

    RunConfig inval;
    inval.epochs = 0;
    CHECK_THROWS_AS(inval.validate(), ConfigError);
    RunConfig badw;
    badw.fixed_window = 3;
    CHECK_THROWS_AS(badw.validate(), ConfigError);
}

TEST_CASE("baseline overfit sanity: loss drops at least 80% over 500 steps on 16 pairs") {
    const std::string ds = testutil::tmp_dir("harness_overfit_ds");
    synth::build_dataset(16, 2, 909, ds, true);
    RunConfig cfg;
    cfg.dataset = ds;
    cfg.out = testutil::tmp_dir("harness_overfit_run");
    cfg.epochs = 250;  // 16 pairs / batch 8 -> 500 steps
    cfg.batch = 8;
    cfg.lr = 0.002;
    cfg.seed = 1;
    cfg.threads = 2;
    std::ostringstream log;
    RunReport rep = train_psn(cfg, log);
    REQUIRE(rep.epoch_losses.size() == 250);
    CHECK(rep.epoch_losses.back() < rep.epoch_losses.front());
    CHECK(rep.epoch_losses.back() <= 0.2 * rep.epoch_losses.front());
}

TEST_CASE("baseline training learns and beats bicubic on held-out data") {
    const std::string out = testutil::tmp_dir("harness_psn");
    RunConfig cfg = tiny_run(out);
    cfg.epochs = 60;
    cfg.threads = 2;
    std::ostringstream log;
    RunReport rep = train_psn(cfg, log);
    REQUIRE(rep.epoch_losses.size() == 60);
    CHECK(rep.epoch_losses.back() < 0.5 * rep.epoch_losses.front());
    CHECK(fs::exists(rep.checkpoint_path));
    CHECK(fs::exists(out + "/loss_curve.csv"));

    // trained baseline beats bicubic on the test split
    RunConfig eval_cfg = cfg;
    eval_cfg.psn_checkpoint = rep.checkpoint_path;
    eval_cfg.out = out + "/eval";
    std::ostringstream elog;
    EvalResult ev = evaluate(eval_cfg, "", elog);
    const SystemEval* bicubic = nullptr;
    const SystemEval* psn = nullptr;
    for (const SystemEval& s : ev.systems) {
        if (s.system == "bicubic") bicubic = &s;
        if (s.system == "psn") psn = &s;
    }
    REQUIRE(bicubic);
    REQUIRE(psn);
    CHECK(psn->overall().psnr > bicubic->overall().psnr);
}

TEST_CASE("refinement training is reproducible and keeps the baseline frozen") {
    const std::string out1 = testutil::tmp_dir("harness_dpmn1");
    const std::string out2 = testutil::tmp_dir("harness_dpmn2");

    RunConfig pcfg = tiny_run(testutil::tmp_dir("harness_psn2"));
    pcfg.epochs = 8;
    pcfg.threads = 2;
    std::ostringstream plog;
    RunReport prep = train_psn(pcfg, plog);
    const std::string psn_bytes = slurp(prep.checkpoint_path);

    auto run_once = [&](const std::string& out) {
        RunConfig cfg = tiny_run(out);
        cfg.psn_checkpoint = prep.checkpoint_path;
        cfg.train_limit = 12;
        cfg.threads = 2;
        std::ostringstream log;
        RunReport rep = train_dpmn(cfg, log);
        RunConfig ecfg = cfg;
        ecfg.out = out + "/eval";
        ecfg.eval_limit = 9;
        std::ostringstream elog;
        return std::pair{rep, evaluate(ecfg, rep.checkpoint_path, elog)};
    };
    auto [rep1, ev1] = run_once(out1);
    auto [rep2, ev2] = run_once(out2);

    // identical seeds give identical losses, metrics and checkpoint bytes
    REQUIRE(rep1.epoch_losses.size() == rep2.epoch_losses.size());
    for (size_t i = 0; i < rep1.epoch_losses.size(); ++i)
        CHECK(rep1.epoch_losses[i] == rep2.epoch_losses[i]);
    CHECK(slurp(rep1.checkpoint_path) == slurp(rep2.checkpoint_path));
    for (size_t i = 0; i < ev1.systems.size(); ++i)
        for (size_t t = 0; t < ev1.systems[i].tiers.size(); ++t) {
            CHECK(std::abs(ev1.systems[i].tiers[t].psnr - ev2.systems[i].tiers[t].psnr) <= 1e-9);
            CHECK(std::abs(ev1.systems[i].tiers[t].ssim - ev2.systems[i].tiers[t].ssim) <= 1e-9);
        }

    // the frozen baseline checkpoint is untouched
    CHECK(slurp(prep.checkpoint_path) == psn_bytes);

    // alpha=0 row matches the baseline row to 1e-12
    const SystemEval* psn_row = nullptr;
    const SystemEval* a0 = nullptr;
    for (const SystemEval& s : ev1.systems) {
        if (s.system == "psn") psn_row = &s;
        if (s.system == "dpmn@a=0.00") a0 = &s;
    }
    REQUIRE(psn_row);
    REQUIRE(a0);
    for (size_t t = 0; t < psn_row->tiers.size(); ++t) {
        CHECK(std::abs(psn_row->tiers[t].psnr - a0->tiers[t].psnr) < 1e-12);
        CHECK(std::abs(psn_row->tiers[t].ssim - a0->tiers[t].ssim) < 1e-12);
    }

    // metrics CSV carries the config hash and the pinned schema
    const std::string csv = slurp(ev1.csv_path);
    CHECK(csv.rfind("# config_hash=", 0) == 0);
    CHECK(csv.find("run_id,split,tier,psnr,ssim,accuracy,n_samples") != std::string::npos);

    // eval artifacts: image grid exists
    CHECK(fs::exists(out1 + "/eval/grid.ppm"));
}

TEST_CASE("train_dpmn requires a baseline checkpoint unless standalone") {
    RunConfig cfg = tiny_run(testutil::tmp_dir("harness_missing"));
    cfg.psn_checkpoint = "does_not_exist.ckpt";
    std::ostringstream log;
    CHECK_THROWS_AS(train_dpmn(cfg, log), IoError);
}

TEST_CASE("standalone strategy trains without a baseline") {
    RunConfig cfg = tiny_run(testutil::tmp_dir("harness_standalone"));
    cfg.strategy = net::PsnStrategy::standalone;
    cfg.train_limit = 8;
    cfg.threads = 2;
    std::ostringstream log;
    RunReport rep = train_dpmn(cfg, log);
    CHECK(fs::exists(rep.checkpoint_path));
}

TEST_CASE("ablation cells resume by checksum and refuse config drift") {
    const std::string psn_out = testutil::tmp_dir("harness_psn3");
    RunConfig pcfg = tiny_run(psn_out);
    pcfg.epochs = 2;
    pcfg.threads = 2;
    std::ostringstream plog;
    RunReport prep = train_psn(pcfg, plog);

    RunConfig base = tiny_run(testutil::tmp_dir("harness_ablate"));
    base.psn_checkpoint = prep.checkpoint_path;
    base.train_limit = 6;
    base.eval_limit = 6;
    base.threads = 2;

    std::ostringstream log1;
    auto cells1 = ablate("window", base, log1);
    REQUIRE(cells1.size() == 4);
    CHECK(fs::exists(base.out + "/window.csv"));

    // resuming skips every finished cell
    std::ostringstream log2;
    auto cells2 = ablate("window", base, log2);
    CHECK(log2.str().find("already done") != std::string::npos);
    for (size_t i = 0; i < cells1.size(); ++i)  // resume round-trips the 9-decimal CSV
        CHECK(std::abs(cells1[i].eval.overall().psnr - cells2[i].eval.overall().psnr) <= 1e-9);

    // a different base config is refused
    RunConfig drifted = base;
    drifted.lr = 0.002;
    std::ostringstream log3;
    CHECK_THROWS_AS(ablate("window", drifted, log3), ConfigError);

    CHECK_THROWS_AS(ablate("nonsense", base, log3), ConfigError);
}

TEST_CASE("report_run prints the stored artifacts") {
    const std::string out = testutil::tmp_dir("harness_report");
    RunConfig cfg = tiny_run(out);
    cfg.strategy = net::PsnStrategy::standalone;
    cfg.train_limit = 6;
    cfg.threads = 2;
    std::ostringstream log;
    train_dpmn(cfg, log);
    std::ostringstream os;
    report_run(out, os);
    CHECK(os.str().find("config.txt") != std::string::npos);
    CHECK(os.str().find("loss_curve.csv") != std::string::npos);
    std::ostringstream empty;
    report_run(testutil::tmp_dir("harness_empty"), empty);
    CHECK(empty.str().find("no run artifacts") != std::string::npos);
}

TEST_CASE("threads resolve from flag, then environment, then default") {
    unsetenv("DPMN_THREADS");
    CHECK(resolve_threads(3) == 3);
    CHECK(resolve_threads(0) == 1);
    setenv("DPMN_THREADS", "2", 1);
    CHECK(resolve_threads(0) == 2);
    CHECK(resolve_threads(5) == 5);
    unsetenv("DPMN_THREADS");
}
