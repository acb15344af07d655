#include "dpmn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "dpmn/image_ops.hpp"
#include "dpmn/threads.hpp"

namespace fs = std::filesystem;

namespace dpmn::harness {

using net::BranchMode;
using net::CmmVariant;
using net::DpmnModel;
using net::PriorSource;
using net::PsnModel;
using net::PsnStrategy;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

void RunConfig::set_kv(const std::string& key, const std::string& value) {
    if (key == "dataset") dataset = value;
    else if (key == "out") out = value;
    else if (key == "psn") psn_checkpoint = value;
    else if (key == "epochs") epochs = std::stoll(value);
    else if (key == "batch") batch = std::stoll(value);
    else if (key == "lr") lr = std::stod(value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "threads") threads = std::stoi(value);
    else if (key == "n_pgrm") net.n_pgrm = std::stoi(value);
    else if (key == "windows") {
        net.window_sizes.clear();
        for (const std::string& w : split_csv(value)) net.window_sizes.push_back(std::stoi(w));
    } else if (key == "heads") net.heads = std::stoi(value);
    else if (key == "patch") net.patch = std::stoi(value);
    else if (key == "embed_dim") net.embed_dim = std::stoi(value);
    else if (key == "alpha") net.alpha = std::stod(value);
    else if (key == "lambda_pixel") weights.pixel = std::stod(value);
    else if (key == "lambda_gradient") weights.gradient = std::stod(value);
    else if (key == "lambda_cmm") weights.cmm = std::stod(value);
    else if (key == "lambda_graphic") weights.branch_graphic = std::stod(value);
    else if (key == "lambda_structure") weights.branch_structure = std::stod(value);
    else if (key == "oracle_priors") oracle_priors = value == "1" || value == "true";
    else if (key == "single_branch") branch_mode = net::branch_mode_from(value.empty() ? "dual" : value);
    else if (key == "fixed_window") fixed_window = std::stoi(value);
    else if (key == "cmm_variant") cmm_variant = net::cmm_variant_from(value);
    else if (key == "train_strategy") strategy = net::strategy_from(value);
    else if (key == "train_limit") train_limit = std::stoll(value);
    else if (key == "eval_limit") eval_limit = std::stoll(value);
    else if (key == "eval_alphas") {
        eval_alphas.clear();
        for (const std::string& a : split_csv(value)) eval_alphas.push_back(std::stod(a));
    } else
        throw ConfigError("unknown config key: " + key);
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    RunConfig cfg;
    std::string line;
    i64 lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        cfg.set_kv(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void RunConfig::apply_fixed_window() {
    if (fixed_window != 0) {
        net.window_sizes = {fixed_window};
        net.dynamic_gate = false;
    }
}

void RunConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be > 0");
    if (batch <= 0) throw ConfigError("batch must be > 0");
    if (lr <= 0) throw ConfigError("lr must be > 0");
    weights.validate();
    if (fixed_window != 0 && fixed_window != 2 && fixed_window != 4 && fixed_window != 8)
        throw ConfigError("fixed_window must be one of 0,2,4,8");
    net.validate(2 * 16, 2 * 64);
    if (oracle_priors && strategy == PsnStrategy::standalone)
        throw ConfigError("oracle priors with a standalone strategy is not a meaningful cell");
}

std::string RunConfig::canonical() const {
    std::ostringstream os;
    std::string windows;
    for (size_t i = 0; i < net.window_sizes.size(); ++i)
        windows += (i ? "," : "") + std::to_string(net.window_sizes[i]);
    std::string alphas;
    for (size_t i = 0; i < eval_alphas.size(); ++i)
        alphas += (i ? "," : "") + fmt(eval_alphas[i]);
    os << "alpha = " << fmt(net.alpha) << "\n"
       << "batch = " << batch << "\n"
       << "cmm_variant = " << net::cmm_variant_name(cmm_variant) << "\n"
       << "dataset = " << dataset << "\n"
       << "embed_dim = " << net.embed_dim << "\n"
       << "epochs = " << epochs << "\n"
       << "eval_alphas = " << alphas << "\n"
       << "eval_limit = " << eval_limit << "\n"
       << "fixed_window = " << fixed_window << "\n"
       << "heads = " << net.heads << "\n"
       << "lambda_cmm = " << fmt(weights.cmm) << "\n"
       << "lambda_gradient = " << fmt(weights.gradient) << "\n"
       << "lambda_graphic = " << fmt(weights.branch_graphic) << "\n"
       << "lambda_pixel = " << fmt(weights.pixel) << "\n"
       << "lambda_structure = " << fmt(weights.branch_structure) << "\n"
       << "lr = " << fmt(lr) << "\n"
       << "n_pgrm = " << net.n_pgrm << "\n"
       << "oracle_priors = " << (oracle_priors ? 1 : 0) << "\n"
       << "patch = " << net.patch << "\n"
       << "seed = " << seed << "\n"
       << "single_branch = " << net::branch_mode_name(branch_mode) << "\n"
       << "train_limit = " << train_limit << "\n"
       << "train_strategy = " << net::strategy_name(strategy) << "\n"
       << "windows = " << windows << "\n";
    return os.str();
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("DPMN_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

// ---------------------------------------------------------------------------
// in-memory dataset cache (8-bit, matching the on-disk form)

namespace {

struct CachedSample {
    std::string id, label;
    synth::Tier tier = synth::Tier::easy;
    std::vector<std::uint8_t> lr, hr;
};

std::vector<std::uint8_t> to_bytes(const Tensor<double>& im) {
    std::vector<std::uint8_t> out(static_cast<size_t>(im.numel()));
    for (i64 i = 0; i < im.numel(); ++i)
        out[static_cast<size_t>(i)] = static_cast<std::uint8_t>(std::lround(im[i] * 255.0));
    return out;
}

Tensor<double> lr_tensor(const CachedSample& s) {
    Tensor<double> t({16, 64, 3});
    for (i64 i = 0; i < t.numel(); ++i) t[i] = s.lr[static_cast<size_t>(i)] / 255.0;
    return t;
}

Tensor<double> hr_tensor(const CachedSample& s) {
    Tensor<double> t({32, 128, 3});
    for (i64 i = 0; i < t.numel(); ++i) t[i] = s.hr[static_cast<size_t>(i)] / 255.0;
    return t;
}

// For the test split a positive limit caps samples per tier, keeping the
// tier structure intact; for train it caps the whole split.
std::vector<CachedSample> load_split(const synth::DatasetManifest& m, const std::string& split,
                                     i64 limit) {
    std::vector<CachedSample> out;
    std::map<std::string, i64> per_tier;
    const bool stratified = split == "test";
    for (const synth::ManifestRow& row : m.rows) {
        if (row.split != split) continue;
        if (limit > 0) {
            if (stratified) {
                if (per_tier[row.tier] >= limit) continue;
                per_tier[row.tier]++;
            } else if (static_cast<i64>(out.size()) >= limit) {
                break;
            }
        }
        synth::SamplePair s = synth::load_sample(m, row);
        CachedSample c;
        c.id = s.id;
        c.label = s.label;
        c.tier = s.tier;
        c.lr = to_bytes(s.lr);
        c.hr = to_bytes(s.hr);
        out.push_back(std::move(c));
    }
    if (out.empty()) throw IoError("dataset split '" + split + "' is empty in " + m.dir);
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << text;
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

}  // namespace

// ---------------------------------------------------------------------------
// training

RunReport train_psn(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    set_threads(resolve_threads(cfg.threads));
    fs::create_directories(cfg.out);
    const double t0 = now_seconds();

    synth::DatasetManifest manifest = synth::load_dataset(cfg.dataset);
    std::vector<CachedSample> train = load_split(manifest, "train", cfg.train_limit);
    log << "train-psn: " << train.size() << " samples, " << cfg.epochs << " epochs, batch "
        << cfg.batch << ", seed " << cfg.seed << "\n";

    PsnModel<float> psn = PsnModel<float>::init(cfg.seed);
    auto params = psn.store.all();
    AdamConfig adam;
    adam.lr = cfg.lr;

    RunReport report;
    std::vector<i64> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<i64>(i);

    for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed, 4000 + static_cast<u64>(epoch));
        for (i64 i = static_cast<i64>(order.size()) - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(i + 1))]);
        double epoch_loss = 0;
        i64 steps = 0;
        for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch)) {
            const size_t end = std::min(order.size(), pos + static_cast<size_t>(cfg.batch));
            double batch_loss = 0;
            for (size_t bi = pos; bi < end; ++bi) {
                const CachedSample& s = train[static_cast<size_t>(order[bi])];
                auto lr_node = constant(lr_tensor(s).cast<float>());
                auto target = constant(hr_tensor(s).cast<float>());
                auto sr = net::tiny_psn_forward(lr_node, psn.params);
                auto sample_loss =
                    loss::img_loss(sr, target, cfg.weights.pixel, cfg.weights.gradient);
                auto scaled = scale(sample_loss, 1.0 / static_cast<double>(end - pos));
                backward(scaled);
                batch_loss += static_cast<double>(sample_loss->value[0]);
            }
            adam_step<float>(params, adam);
            epoch_loss += batch_loss / static_cast<double>(end - pos);
            ++steps;
        }
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(steps));
        log << "epoch " << epoch << " loss " << fmt(report.epoch_losses.back()) << "\n";
    }

    report.checkpoint_path = (fs::path(cfg.out) / "psn.ckpt").string();
    psn.save(report.checkpoint_path, /*mark_frozen=*/true);
    report.wall_seconds = now_seconds() - t0;
    report.config_echo = cfg.canonical();

    std::ostringstream curve;
    curve << "# config_hash=" << hex64(cfg.hash()) << "\nepoch,loss\n";
    for (size_t e = 0; e < report.epoch_losses.size(); ++e)
        curve << e << ',' << fmt(report.epoch_losses[e]) << '\n';
    write_text((fs::path(cfg.out) / "loss_curve.csv").string(), curve.str());
    write_text((fs::path(cfg.out) / "config.txt").string(),
               "# config_hash=" + hex64(cfg.hash()) + "\n" + cfg.canonical());
    log << "wrote " << report.checkpoint_path << " (" << fmt(report.wall_seconds) << "s)\n";
    return report;
}

namespace {

double holdout_psnr(const std::vector<CachedSample>& test, const DpmnModel<float>& model,
                    const PsnModel<float>* psn, const RunConfig& cfg, i64 cap) {
    NoGradGuard ng;
    double total = 0;
    const i64 n = std::min<i64>(cap, static_cast<i64>(test.size()));
    for (i64 i = 0; i < n; ++i) {
        const CachedSample& s = test[static_cast<size_t>(i)];
        Tensor<double> hr = hr_tensor(s);
        auto out = net::dpmn_forward(lr_tensor(s), model, psn, cfg.strategy,
                                     cfg.oracle_priors ? PriorSource::from_hr
                                                       : PriorSource::from_previous,
                                     &hr, cfg.net.alpha);
        total += metrics::psnr(out.fused->value.cast<double>(), hr);
    }
    return total / static_cast<double>(n);
}

}  // namespace

RunReport train_dpmn(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    set_threads(resolve_threads(cfg.threads));
    fs::create_directories(cfg.out);
    const double t0 = now_seconds();

    synth::DatasetManifest manifest = synth::load_dataset(cfg.dataset);
    std::vector<CachedSample> train = load_split(manifest, "train", cfg.train_limit);
    std::vector<CachedSample> test = load_split(manifest, "test", 48);

    std::optional<PsnModel<float>> psn;
    std::string psn_bytes_before;
    if (cfg.strategy != PsnStrategy::standalone) {
        if (cfg.psn_checkpoint.empty() || !fs::exists(cfg.psn_checkpoint))
            throw IoError("missing frozen baseline checkpoint: '" + cfg.psn_checkpoint + "'");
        psn = PsnModel<float>::load(cfg.psn_checkpoint);
        psn_bytes_before = read_file_bytes(cfg.psn_checkpoint);
    }

    DpmnModel<float> model =
        DpmnModel<float>::init(cfg.net, cfg.branch_mode, cfg.cmm_variant, cfg.seed);
    std::vector<Parameter<float>*> params = model.store.all();
    if (cfg.strategy == PsnStrategy::finetune)
        for (Parameter<float>* p : psn->store.all()) params.push_back(p);

    log << "train-dpmn: " << train.size() << " samples, " << cfg.epochs << " epochs, batch "
        << cfg.batch << ", strategy " << net::strategy_name(cfg.strategy) << ", branches "
        << net::branch_mode_name(cfg.branch_mode) << ", cmm "
        << net::cmm_variant_name(cfg.cmm_variant) << ", oracle " << (cfg.oracle_priors ? 1 : 0)
        << ", param tensors " << params.size() << "\n";

    AdamConfig adam;
    adam.lr = cfg.lr;
    RunReport report;
    std::vector<i64> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<i64>(i);
    std::ostringstream curve;
    curve << "# config_hash=" << hex64(cfg.hash()) << "\nepoch,loss,holdout_psnr\n";

    for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed, 5000 + static_cast<u64>(epoch));
        for (i64 i = static_cast<i64>(order.size()) - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(i + 1))]);
        double epoch_loss = 0;
        i64 steps = 0;
        for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch)) {
            const size_t end = std::min(order.size(), pos + static_cast<size_t>(cfg.batch));
            double batch_loss = 0;
            for (size_t bi = pos; bi < end; ++bi) {
                const CachedSample& s = train[static_cast<size_t>(order[bi])];
                Tensor<double> hr = hr_tensor(s);
                auto outs = net::dpmn_forward(lr_tensor(s), model, psn ? &*psn : nullptr,
                                              cfg.strategy,
                                              cfg.oracle_priors ? PriorSource::from_hr
                                                                : PriorSource::from_previous,
                                              &hr, cfg.net.alpha);
                auto target = constant(hr.cast<float>());
                auto sample_loss = loss::total_loss(outs.modulated, outs.refined_graphic,
                                                    outs.refined_structure, target, cfg.weights);
                auto scaled = scale(sample_loss, 1.0 / static_cast<double>(end - pos));
                backward(scaled);
                batch_loss += static_cast<double>(sample_loss->value[0]);
            }
            adam_step<float>(params, adam);
            epoch_loss += batch_loss / static_cast<double>(end - pos);
            ++steps;
        }
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(steps));
        const double hpsnr = holdout_psnr(test, model, psn ? &*psn : nullptr, cfg, 48);
        curve << epoch << ',' << fmt(report.epoch_losses.back()) << ',' << fmt(hpsnr) << '\n';
        log << "epoch " << epoch << " loss " << fmt(report.epoch_losses.back()) << " holdout_psnr "
            << fmt(hpsnr) << "\n";
    }

    // frozen contract: baseline parameters must be bitwise unchanged
    if (cfg.strategy == PsnStrategy::frozen) {
        const std::string tmp = (fs::path(cfg.out) / "psn_after.ckpt").string();
        psn->save(tmp, true);
        const bool unchanged = read_file_bytes(tmp) == psn_bytes_before;
        fs::remove(tmp);
        fs::remove(tmp + ".manifest");
        log << "frozen baseline unchanged: " << (unchanged ? "yes" : "NO") << "\n";
        if (!unchanged) throw ShapeError("frozen baseline parameters changed during training");
    }

    report.checkpoint_path = (fs::path(cfg.out) / "dpmn.ckpt").string();
    model.save(report.checkpoint_path);
    report.wall_seconds = now_seconds() - t0;
    report.config_echo = cfg.canonical();
    write_text((fs::path(cfg.out) / "loss_curve.csv").string(), curve.str());
    write_text((fs::path(cfg.out) / "config.txt").string(),
               "# config_hash=" + hex64(cfg.hash()) + "\n" + cfg.canonical());
    std::ostringstream rep;
    rep << "run " << cfg.out << "\nconfig_hash " << hex64(cfg.hash()) << "\nepochs " << cfg.epochs
        << "\nfinal_loss " << (report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back())
        << "\nwall_seconds " << report.wall_seconds << "\ncheckpoint " << report.checkpoint_path
        << "\n";
    write_text((fs::path(cfg.out) / "report.txt").string(), rep.str());
    log << "wrote " << report.checkpoint_path << " (" << fmt(report.wall_seconds) << "s)\n";
    return report;
}

// ---------------------------------------------------------------------------
// evaluation

const TierMetrics& SystemEval::overall() const { return tier("all"); }

const TierMetrics& SystemEval::tier(const std::string& name) const {
    for (const TierMetrics& t : tiers)
        if (t.tier == name) return t;
    throw ConfigError("no tier '" + name + "' in eval of " + system);
}

void write_metrics_csv(const std::string& path, u64 config_hash,
                       const std::vector<std::pair<std::string, std::vector<TierMetrics>>>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << "# config_hash=" << hex64(config_hash) << "\n";
    os << "run_id,split,tier,psnr,ssim,accuracy,n_samples\n";
    for (const auto& [run_id, tiers] : rows)
        for (const TierMetrics& t : tiers)
            os << run_id << ",test," << t.tier << ',' << fmt(t.psnr) << ',' << fmt(t.ssim) << ','
               << fmt(t.accuracy) << ',' << t.n << '\n';
}

namespace {

struct Accumulator {
    std::vector<metrics::EvalRecord> records;

    void add(const std::string& tier, const std::string& label, const Tensor<double>& output,
             const Tensor<double>& hr) {
        metrics::EvalRecord r;
        r.tier = tier;
        r.psnr_db = metrics::psnr(output, hr);
        r.ssim = metrics::ssim(output, hr);
        r.recognized = priors::recognize(output).text;
        r.exact_match = metrics::labels_match(r.recognized, label);
        records.push_back(std::move(r));
    }

    std::vector<TierMetrics> tiers() const {
        std::vector<TierMetrics> out;
        for (const char* tier : {"easy", "medium", "hard", "all"}) {
            TierMetrics t;
            t.tier = tier;
            for (const metrics::EvalRecord& r : records) {
                if (t.tier != "all" && r.tier != t.tier) continue;
                t.psnr += r.psnr_db;
                t.ssim += r.ssim;
                t.accuracy += r.exact_match ? 1.0 : 0.0;
                t.n++;
            }
            if (t.n == 0) continue;
            t.psnr /= static_cast<double>(t.n);
            t.ssim /= static_cast<double>(t.n);
            t.accuracy /= static_cast<double>(t.n);
            out.push_back(std::move(t));
        }
        return out;
    }
};

// 5-row qualitative grid: LR (nearest up), baseline, modulated, fused, HR
void write_eval_grid(const std::string& path, const std::vector<Tensor<double>>& lr,
                     const std::vector<Tensor<double>>& base,
                     const std::vector<Tensor<double>>& modulated,
                     const std::vector<Tensor<double>>& fused,
                     const std::vector<Tensor<double>>& hr) {
    const i64 n = static_cast<i64>(lr.size());
    if (n == 0) return;
    const i64 tile_h = 32, tile_w = 128, sep = 2;
    const i64 H = 5 * tile_h + 6 * sep, W = n * tile_w + (n + 1) * sep;
    Tensor<double> grid = Tensor<double>::full({H, W, 3}, 1.0);
    auto blit = [&](const Tensor<double>& im, i64 row, i64 col) {
        for (i64 y = 0; y < tile_h; ++y)
            for (i64 x = 0; x < tile_w; ++x)
                for (i64 c = 0; c < 3; ++c)
                    grid.at(sep + row * (tile_h + sep) + y, sep + col * (tile_w + sep) + x, c) =
                        im.at(y, x, c);
    };
    for (i64 i = 0; i < n; ++i) {
        blit(img::nearest_up2(lr[static_cast<size_t>(i)]), 0, i);
        blit(base[static_cast<size_t>(i)], 1, i);
        blit(modulated[static_cast<size_t>(i)], 2, i);
        blit(fused[static_cast<size_t>(i)], 3, i);
        blit(hr[static_cast<size_t>(i)], 4, i);
    }
    img::write_ppm(path, grid);
}

}  // namespace

EvalResult evaluate(const RunConfig& cfg, const std::string& dpmn_checkpoint, std::ostream& log) {
    set_threads(resolve_threads(cfg.threads));
    fs::create_directories(cfg.out);
    synth::DatasetManifest manifest = synth::load_dataset(cfg.dataset);
    std::vector<CachedSample> test = load_split(manifest, "test", cfg.eval_limit);

    std::optional<PsnModel<float>> psn;
    if (cfg.strategy != PsnStrategy::standalone) {
        if (cfg.psn_checkpoint.empty() || !fs::exists(cfg.psn_checkpoint))
            throw IoError("missing frozen baseline checkpoint: '" + cfg.psn_checkpoint + "'");
        psn = PsnModel<float>::load(cfg.psn_checkpoint);
    }
    std::optional<DpmnModel<float>> model;
    if (!dpmn_checkpoint.empty()) model = DpmnModel<float>::load(dpmn_checkpoint);

    Accumulator acc_bicubic, acc_psn;
    std::map<std::string, Accumulator> acc_dpmn;  // keyed by system tag
    auto alpha_tag = [](double a) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "dpmn@a=%.2f", a);
        return std::string(buf);
    };

    std::vector<Tensor<double>> grid_lr, grid_base, grid_mod, grid_fused, grid_hr;
    NoGradGuard ng;
    log << "eval: " << test.size() << " test samples\n";
    for (const CachedSample& s : test) {
        Tensor<double> lr = lr_tensor(s);
        Tensor<double> hr = hr_tensor(s);
        const std::string tier = synth::tier_name(s.tier);

        Tensor<double> up = img::bicubic_up2(lr);
        acc_bicubic.add(tier, s.label, up, hr);

        Tensor<double> base;
        if (psn) {
            auto b = net::tiny_psn_forward(constant(lr.cast<float>()), psn->params);
            base = b->value.cast<double>();
        } else {
            base = up;
        }
        acc_psn.add(tier, s.label, base, hr);

        if (model) {
            auto outs = net::dpmn_forward(lr, *model, psn ? &*psn : nullptr, cfg.strategy,
                                          cfg.oracle_priors ? PriorSource::from_hr
                                                            : PriorSource::from_previous,
                                          &hr, cfg.net.alpha);
            Tensor<double> modulated = outs.modulated->value.cast<double>();
            Tensor<double> base_used = outs.base_sr->value.cast<double>();
            for (double a : cfg.eval_alphas) {
                Tensor<double> fused(modulated.shape());
                for (i64 i = 0; i < fused.numel(); ++i)
                    fused[i] = a * modulated[i] + (1.0 - a) * base_used[i];
                acc_dpmn[alpha_tag(a)].add(tier, s.label, fused, hr);
            }
            if (grid_lr.size() < 8) {
                Tensor<double> fused(modulated.shape());
                for (i64 i = 0; i < fused.numel(); ++i)
                    fused[i] = cfg.net.alpha * modulated[i] + (1.0 - cfg.net.alpha) * base_used[i];
                grid_lr.push_back(lr);
                grid_base.push_back(base_used);
                grid_mod.push_back(modulated);
                grid_fused.push_back(fused);
                grid_hr.push_back(hr);
            }
        }
    }

    EvalResult result;
    const std::string run_id = fs::path(cfg.out).filename().string();
    std::vector<std::pair<std::string, std::vector<TierMetrics>>> rows;
    auto push_system = [&](const std::string& name, double alpha, const Accumulator& acc) {
        SystemEval se;
        se.system = name;
        se.alpha = alpha;
        se.tiers = acc.tiers();
        rows.push_back({run_id + "/" + name, se.tiers});
        result.systems.push_back(std::move(se));
    };
    push_system("bicubic", 0, acc_bicubic);
    push_system("psn", 0, acc_psn);
    for (double a : cfg.eval_alphas)
        if (acc_dpmn.count(alpha_tag(a))) push_system(alpha_tag(a), a, acc_dpmn.at(alpha_tag(a)));

    result.csv_path = (fs::path(cfg.out) / "metrics.csv").string();
    write_metrics_csv(result.csv_path, cfg.hash(), rows);
    if (!grid_lr.empty())
        write_eval_grid((fs::path(cfg.out) / "grid.ppm").string(), grid_lr, grid_base, grid_mod,
                        grid_fused, grid_hr);
    log << "wrote " << result.csv_path << "\n";
    return result;
}

// ---------------------------------------------------------------------------
// ablation grids

namespace {

struct CellSpec {
    std::string name;
    std::function<void(RunConfig&)> apply;
};

std::vector<CellSpec> suite_cells(const std::string& suite) {
    std::vector<CellSpec> cells;
    auto add = [&](const std::string& name, std::function<void(RunConfig&)> f) {
        cells.push_back({name, std::move(f)});
    };
    if (suite == "priors" || suite == "all") {
        add("mask", [](RunConfig& c) { c.branch_mode = BranchMode::mask_only; });
        add("graphic", [](RunConfig& c) { c.branch_mode = BranchMode::graphic_only; });
        add("concat", [](RunConfig& c) { c.branch_mode = BranchMode::concat_prior; });
        add("dual", [](RunConfig& c) { c.branch_mode = BranchMode::dual; });
        add("dual_oracle", [](RunConfig& c) {
            c.branch_mode = BranchMode::dual;
            c.oracle_priors = true;
        });
    }
    if (suite == "strategy" || suite == "all") {
        add("frozen", [](RunConfig& c) { c.strategy = PsnStrategy::frozen; });
        add("finetune", [](RunConfig& c) { c.strategy = PsnStrategy::finetune; });
        add("standalone", [](RunConfig& c) { c.strategy = PsnStrategy::standalone; });
    }
    if (suite == "pgrm_count" || suite == "all") {
        for (int n = 1; n <= 5; ++n)
            add("n" + std::to_string(n), [n](RunConfig& c) { c.net.n_pgrm = n; });
    }
    if (suite == "window" || suite == "all") {
        for (int w : {2, 4, 8})
            add("fixed" + std::to_string(w), [w](RunConfig& c) { c.fixed_window = w; });
        add("dynamic", [](RunConfig& c) { c.fixed_window = 0; });
    }
    if (suite == "cmm" || suite == "all") {
        add("cmm_full", [](RunConfig& c) { c.cmm_variant = CmmVariant::full; });
        add("cmm_no_ca", [](RunConfig& c) { c.cmm_variant = CmmVariant::no_ca; });
        add("cmm_unet", [](RunConfig& c) { c.cmm_variant = CmmVariant::unet_like; });
        add("cmm_tsrn", [](RunConfig& c) { c.cmm_variant = CmmVariant::tsrn_like; });
    }
    if (cells.empty()) throw ConfigError("unknown ablation suite: " + suite);
    return cells;
}

const char* kAblationHeader =
    "suite,cell,config_hash,"
    "psnr_easy,ssim_easy,acc_easy,psnr_medium,ssim_medium,acc_medium,"
    "psnr_hard,ssim_hard,acc_hard,psnr_avg,ssim_avg,acc_avg,train_seconds";

std::string cell_csv_row(const std::string& suite, const AblationCell& cell, u64 hash) {
    std::ostringstream os;
    os << suite << ',' << cell.cell << ',' << hex64(hash);
    for (const char* tier : {"easy", "medium", "hard", "all"}) {
        const TierMetrics& t = cell.eval.tier(tier);
        os << ',' << fmt(t.psnr) << ',' << fmt(t.ssim) << ',' << fmt(t.accuracy);
    }
    os << ',' << fmt(cell.train_seconds);
    return os.str();
}

}  // namespace

std::vector<AblationCell> ablate(const std::string& suite, const RunConfig& base,
                                 std::ostream& log) {
    const u64 base_hash = base.hash();
    fs::create_directories(base.out);
    const std::string stamp_path = (fs::path(base.out) / "config_hash.txt").string();
    if (fs::exists(stamp_path)) {
        const std::string existing = read_file_bytes(stamp_path);
        if (existing != hex64(base_hash) + "\n")
            throw ConfigError("refusing to resume: config hash mismatch in " + base.out);
    } else {
        write_text(stamp_path, hex64(base_hash) + "\n");
    }

    std::vector<AblationCell> cells;
    for (const CellSpec& spec : suite_cells(suite)) {
        const fs::path cell_dir = fs::path(base.out) / "cells" / spec.name;
        const std::string done_path = (cell_dir / "done.csv").string();
        AblationCell cell;
        cell.suite = suite;
        cell.cell = spec.name;

        if (fs::exists(done_path)) {
            // resume: completed cells are skipped when the checksum matches
            std::ifstream is(done_path);
            std::string hash_line, header, row;
            std::getline(is, hash_line);
            std::getline(is, header);
            std::getline(is, row);
            if (hash_line != "# config_hash=" + hex64(base_hash) || row.empty())
                throw ConfigError("stale cell marker with mismatched hash: " + done_path);
            const auto fields = split_csv(row);
            SystemEval se;
            se.system = spec.name;
            const char* tiers[4] = {"easy", "medium", "hard", "all"};
            for (int t = 0; t < 4; ++t) {
                TierMetrics tm;
                tm.tier = tiers[t];
                tm.psnr = std::stod(fields[static_cast<size_t>(3 + 3 * t)]);
                tm.ssim = std::stod(fields[static_cast<size_t>(4 + 3 * t)]);
                tm.accuracy = std::stod(fields[static_cast<size_t>(5 + 3 * t)]);
                se.tiers.push_back(tm);
            }
            cell.eval = se;
            cell.train_seconds = std::stod(fields.back());
            cells.push_back(cell);
            log << "cell " << spec.name << ": already done, skipping\n";
            continue;
        }

        RunConfig cfg = base;
        spec.apply(cfg);
        cfg.apply_fixed_window();
        cfg.out = cell_dir.string();
        log << "cell " << spec.name << ": training\n";
        RunReport rep = train_dpmn(cfg, log);
        cell.train_seconds = rep.wall_seconds;

        RunConfig eval_cfg = cfg;
        eval_cfg.eval_alphas = {cfg.net.alpha};
        EvalResult ev = evaluate(eval_cfg, rep.checkpoint_path, log);
        for (const SystemEval& se : ev.systems)
            if (se.system.rfind("dpmn@", 0) == 0) cell.eval = se;
        cell.eval.system = spec.name;

        write_text(done_path, "# config_hash=" + hex64(base_hash) + "\n" +
                                  std::string(kAblationHeader) + "\n" +
                                  cell_csv_row(suite, cell, cfg.hash()) + "\n");
        cells.push_back(std::move(cell));
    }

    std::ostringstream table;
    table << "# config_hash=" << hex64(base_hash) << "\n" << kAblationHeader << "\n";
    for (const AblationCell& c : cells) table << cell_csv_row(suite, c, base_hash) << "\n";
    write_text((fs::path(base.out) / (suite + ".csv")).string(), table.str());
    log << "wrote " << (fs::path(base.out) / (suite + ".csv")).string() << "\n";
    return cells;
}

// ---------------------------------------------------------------------------
// gradient-check suite

namespace {

net::NetConfig toy_net() {
    net::NetConfig cfg;
    cfg.n_pgrm = 1;
    cfg.window_sizes = {2, 4};
    cfg.heads = 2;
    cfg.patch = 2;
    cfg.embed_dim = 8;
    return cfg;
}

Tensor<double> fixed_binary(Shape shape, u64 seed, double density = 0.3) {
    Rng rng(seed);
    Tensor<double> t(std::move(shape));
    for (i64 i = 0; i < t.numel(); ++i) t[i] = rng.uniform() < density ? 1.0 : 0.0;
    return t;
}

// Central differences around an L1 kink are only trustworthy when every
// gradient-profile residual sits farther from zero than the FD step can move
// it. A jittered checkerboard target has |gradient| >= 0.5 at every interior
// tap, so against near-flat predictions (|gradient| <= 0.2, asserted below)
// each residual keeps a fixed sign under the FD perturbation.
Tensor<double> checkerboard_target(Shape shape, u64 seed) {
    Rng rng(seed);
    Tensor<double> t(std::move(shape));
    const i64 H = t.dim(0), W = t.dim(1), C = t.dim(2);
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
            for (i64 c = 0; c < C; ++c)
                t.at(y, x, c) = 0.5 + ((y + x) % 2 ? 0.3 : -0.3) + rng.uniform(-0.05, 0.05);
    return t;
}

void require_near_flat(const Tensor<double>& pred, const char* what) {
    NoGradGuard ng;
    Tensor<double> g = image_grad(constant(pred.clone()))->value;
    double m = 0;
    for (i64 i = 0; i < g.numel(); ++i) m = std::max(m, std::abs(g[i]));
    if (m > 0.2)
        throw ConfigError(std::string("gradcheck fixture '") + what +
                          "' is not flat enough for the checkerboard margin");
}

// With zero-initialized biases an all-background prior patch embeds to a
// zero-variance token, parking layernorm on its degenerate point where the
// curvature is ~1/sqrt(eps) and central differences measure conditioning
// rather than correctness. The check point therefore jitters every bias.
void jitter_biases(const std::vector<Parameter<double>*>& params, u64 seed) {
    Rng rng(seed);
    for (Parameter<double>* p : params) {
        const std::string& n = p->name;
        if (n.size() > 2 && n.compare(n.size() - 2, 2, ".b") == 0)
            for (i64 i = 0; i < p->value().numel(); ++i) p->value()[i] = rng.uniform(-0.05, 0.05);
    }
}

}  // namespace

SuiteReport gradcheck_suite(bool quick, std::ostream& log) {
    const double t0 = now_seconds();
    ThreadGuard single(1);
    SuiteReport report;
    GradCheckOptions opt;

    auto run_entry = [&](const std::string& name, const std::function<NodePtr<double>()>& build,
                         const std::vector<Parameter<double>*>& params, i64 max_coords) {
        GradCheckOptions o = opt;
        o.max_coords_per_param = max_coords;
        GradCheckReport r = gradcheck(build, params, o);
        SuiteEntry e;
        e.name = name;
        e.max_rel = r.max_rel;
        e.pass = r.pass(o.tol);
        for (const auto& en : r.entries) e.coords += en.coords_checked;
        report.entries.push_back(e);
        log << "gradcheck " << name << ": max_rel " << fmt(e.max_rel) << " over " << e.coords
            << " coords -> " << (e.pass ? "ok" : "FAIL") << "\n";
    };

    const net::NetConfig cfg = toy_net();

    {  // patch embedding
        net::ParamStore<double> store;
        Rng rng(1301);
        Parameter<double> image("image", Tensor<double>::uniform({8, 32, 3}, rng, 0.05, 0.95));
        net::ConvP<double> embed = net::init_conv(store, "embed", 2, 2, 3, 8, 2, 0, rng);
        Tensor<double> w = Tensor<double>::uniform({4, 16, 8}, rng, -1, 1);
        auto params = store.all();
        params.push_back(&image);
        run_entry("patch_embed", [&] {
            return sum_all(mul(net::conv(image.node, embed), constant(w.clone())));
        }, params, 0);
    }

    for (bool shifted : {false, true}) {  // DW-MCA and DSW-MCA
        net::ParamStore<double> store;
        Rng rng(shifted ? 1307 : 1303);
        net::McaParams<double> mca = net::init_mca(store, "mca", cfg, rng);
        Parameter<double> q("q_tokens", Tensor<double>::uniform({4, 16, 8}, rng, -1, 1));
        Parameter<double> kv("kv_tokens", Tensor<double>::uniform({4, 16, 8}, rng, -1, 1));
        Tensor<double> w = Tensor<double>::uniform({4, 16, 8}, rng, -1, 1);
        auto params = store.all();
        params.push_back(&q);
        params.push_back(&kv);
        run_entry(shifted ? "dsw_mca" : "dw_mca", [&, shifted] {
            return sum_all(
                mul(net::mca_forward(q.node, kv.node, mca, cfg, shifted), constant(w.clone())));
        }, params, 0);
    }

    {  // LeFF
        net::ParamStore<double> store;
        Rng rng(1311);
        net::LeffParams<double> leff = net::init_leff(store, "leff", 8, rng);
        Parameter<double> x("tokens", Tensor<double>::uniform({4, 16, 8}, rng, -1, 1));
        Tensor<double> w = Tensor<double>::uniform({4, 16, 8}, rng, -1, 1);
        auto params = store.all();
        params.push_back(&x);
        run_entry("leff", [&] {
            return sum_all(mul(net::leff_forward(x.node, leff), constant(w.clone())));
        }, params, 0);
    }

    {  // full refinement module with the per-step image loss
        net::ParamStore<double> store;
        Rng rng(1313);
        net::PgrmParams<double> pgrm = net::init_pgrm(store, "pgrm", cfg, 2, rng);
        jitter_biases(store.all(), 71);
        Parameter<double> image("image", Tensor<double>::uniform({8, 32, 3}, rng, 0.1, 0.9));
        Tensor<double> prior = fixed_binary({8, 32, 2}, 17);
        {
            NoGradGuard ng;
            require_near_flat(net::pgrm_forward(image.node, constant(prior.clone()), pgrm, cfg)->value,
                              "pgrm");
        }
        Tensor<double> target = checkerboard_target({8, 32, 3}, 9100);
        auto params = store.all();
        params.push_back(&image);
        run_entry("pgrm_img_loss", [&] {
            auto out = net::pgrm_forward(image.node, constant(prior.clone()), pgrm, cfg);
            return loss::img_loss(out, constant(target.clone()), 1.0, 1.0);
        }, params, quick ? 24 : 64);
    }

    {  // complementation module with its image loss
        net::ParamStore<double> store;
        Rng rng(1319);
        net::CmmParams<double> cmm = net::init_cmm(store, "cmm", CmmVariant::full, rng);
        Parameter<double> a("image_a", Tensor<double>::uniform({8, 32, 3}, rng, 0.1, 0.9));
        Parameter<double> b("image_b", Tensor<double>::uniform({8, 32, 3}, rng, 0.1, 0.9));
        {
            NoGradGuard ng;
            require_near_flat(net::cmm_forward(a.node, b.node, cmm)->value, "cmm");
        }
        Tensor<double> target = checkerboard_target({8, 32, 3}, 9200);
        auto params = store.all();
        params.push_back(&a);
        params.push_back(&b);
        run_entry("cmm_img_loss", [&] {
            auto out = net::cmm_forward(a.node, b.node, cmm);
            return loss::img_loss(out, constant(target.clone()), 1.0, 1.0);
        }, params, quick ? 6 : 16);
    }

    {  // baseline SR net
        net::ParamStore<double> store;
        Rng rng(1321);
        net::TinyPsnParams<double> psn = net::init_tiny_psn(store, "psn", rng);
        Parameter<double> lr("lr_image", Tensor<double>::uniform({4, 16, 3}, rng, 0.1, 0.9));
        {
            NoGradGuard ng;
            require_near_flat(net::tiny_psn_forward(lr.node, psn)->value, "tiny_psn");
        }
        Tensor<double> target = checkerboard_target({8, 32, 3}, 9300);
        auto params = store.all();
        params.push_back(&lr);
        run_entry("tiny_psn_img_loss", [&] {
            auto out = net::tiny_psn_forward(lr.node, psn);
            return loss::img_loss(out, constant(target.clone()), 1.0, 1.0);
        }, params, quick ? 16 : 48);
    }

    {  // branch + total losses with non-trivial weights
        Rng rng(1327);
        Parameter<double> p0("pred_cmm", Tensor<double>::uniform({6, 10, 3}, rng, 0.45, 0.55));
        Parameter<double> p1("pred_g", Tensor<double>::uniform({6, 10, 3}, rng, 0.45, 0.55));
        Parameter<double> p2("pred_s", Tensor<double>::uniform({6, 10, 3}, rng, 0.45, 0.55));
        require_near_flat(p0.value(), "pred_cmm");
        require_near_flat(p1.value(), "pred_g");
        require_near_flat(p2.value(), "pred_s");
        Tensor<double> target = checkerboard_target({6, 10, 3}, 9400);
        loss::LossWeights w;
        w.pixel = 0.7;
        w.gradient = 1.3;
        w.cmm = 0.9;
        w.branch_graphic = 1.1;
        w.branch_structure = 0.6;
        run_entry("total_loss", [&] {
            std::vector<NodePtr<double>> bg = {p1.node, sigmoid(p1.node)};
            std::vector<NodePtr<double>> bs = {p2.node};
            return loss::total_loss(p0.node, bg, bs, constant(target.clone()), w);
        }, {&p0, &p1, &p2}, 0);
    }

    {  // total objective through the full model (N=1, default dims, frozen priors)
        net::NetConfig full;
        full.n_pgrm = 1;
        DpmnModel<double> model =
            DpmnModel<double>::init(full, BranchMode::dual, CmmVariant::full, 0xfeed);
        jitter_biases(model.store.all(), 73);
        PsnModel<double> psn = PsnModel<double>::init(0xbeef);

        // 16x64 images keep the kink census tractable; the priors are frozen
        // at the base point (injected per branch) so finite differences see
        // the constants the analytic path saw.
        Rng rng(1331);
        Tensor<double> lr_img = Tensor<double>::uniform({8, 32, 3}, rng, 0.05, 0.95);
        std::vector<net::PriorLog> frozen(model.branches.size());
        std::vector<Tensor<double>> base_outs;
        {
            NoGradGuard ng;
            auto lr_node = constant(lr_img.cast<double>());
            auto base = stop_gradient(net::tiny_psn_forward(lr_node, psn.params));
            frozen[0].push_back(fixed_binary({16, 64, 2}, 23));            // graphic stand-in
            frozen[1].push_back(priors::binarize(base->value));            // real structure mask
            std::vector<std::vector<NodePtr<double>>> per_branch;
            for (size_t b = 0; b < model.branches.size(); ++b)
                per_branch.push_back(net::branch_forward(
                    base, model.branches[b], full, PriorSource::from_previous, nullptr,
                    static_cast<net::AttnTrace<double>*>(nullptr), nullptr, &frozen[b]));
            require_near_flat(per_branch[0].back()->value, "full_model_branch_g");
            require_near_flat(per_branch[1].back()->value, "full_model_branch_s");
            require_near_flat(
                net::cmm_forward(per_branch[0].back(), per_branch[1].back(), model.cmm)->value,
                "full_model_cmm");
        }
        Tensor<double> target = checkerboard_target({16, 64, 3}, 9500);
        auto build = [&] {
            auto lr_node = constant(lr_img.cast<double>());
            auto base = stop_gradient(net::tiny_psn_forward(lr_node, psn.params));
            std::vector<std::vector<NodePtr<double>>> per_branch;
            for (size_t b = 0; b < model.branches.size(); ++b)
                per_branch.push_back(net::branch_forward(
                    base, model.branches[b], full, PriorSource::from_previous, nullptr,
                    static_cast<net::AttnTrace<double>*>(nullptr), nullptr, &frozen[b]));
            auto modulated =
                net::cmm_forward(per_branch[0].back(), per_branch[1].back(), model.cmm);
            return loss::total_loss(modulated, per_branch[0], per_branch[1],
                                    constant(target.clone()), {});
        };
        run_entry("full_model_total_loss", build, model.store.all(), quick ? 1 : 2);

        // frozen baseline: gradients must never reach the baseline params
        zero_grads(model.store.all());
        backward(build());
        bool psn_clean = true;
        for (Parameter<double>* p : psn.store.all()) psn_clean = psn_clean && !p->node->has_grad();
        SuiteEntry e;
        e.name = "frozen_psn_zero_grads";
        e.max_rel = psn_clean ? 0.0 : 1.0;
        e.pass = psn_clean;
        e.coords = static_cast<i64>(psn.store.all().size());
        report.entries.push_back(e);
        zero_grads(model.store.all());
        log << "gradcheck frozen_psn_zero_grads: " << (psn_clean ? "ok" : "FAIL") << "\n";
    }

    {  // prior generation is opaque to gradients
        Parameter<double> image("image", synth::render_hr("ZEROG", 55));
        auto pp = priors::make_priors(image.value());
        auto loss_node =
            add(sum_all(constant(pp.graphic.clone())), sum_all(constant(pp.structure.clone())));
        backward(loss_node);
        const bool clean = !image.node->has_grad();
        SuiteEntry e;
        e.name = "priors_zero_upstream_grads";
        e.max_rel = clean ? 0.0 : 1.0;
        e.pass = clean;
        e.coords = image.value().numel();
        report.entries.push_back(e);
        log << "gradcheck priors_zero_upstream_grads: " << (clean ? "ok" : "FAIL") << "\n";
    }

    report.all_pass = true;
    for (const SuiteEntry& e : report.entries) report.all_pass = report.all_pass && e.pass;
    report.wall_seconds = now_seconds() - t0;
    log << "gradcheck suite: " << (report.all_pass ? "PASS" : "FAIL") << " in "
        << fmt(report.wall_seconds) << "s\n";
    return report;
}

void report_run(const std::string& run_dir, std::ostream& os) {
    const fs::path dir(run_dir);
    bool found = false;
    for (const char* name : {"config.txt", "report.txt", "loss_curve.csv", "metrics.csv"}) {
        const fs::path p = dir / name;
        if (!fs::exists(p)) continue;
        found = true;
        os << "== " << name << " ==\n" << read_file_bytes(p.string()) << "\n";
    }
    if (!found) os << "no run artifacts found in " << run_dir << "\n";
}

}  // namespace dpmn::harness
