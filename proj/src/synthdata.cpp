#include "dpmn/synthdata.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dpmn/image_ops.hpp"
#include "dpmn/rng.hpp"

namespace fs = std::filesystem;

namespace dpmn::synth {

namespace {

constexpr u64 kStyleStream = 101;
constexpr u64 kNoiseStream = 202;

std::array<double, 3> seeded_color(Rng& rng, double luma_lo, double luma_hi) {
    const double target = rng.uniform(luma_lo, luma_hi);
    const double dr = rng.uniform(-0.04, 0.04);
    const double db = rng.uniform(-0.04, 0.04);
    const double dg = -(0.299 * dr + 0.114 * db) / 0.587;  // luma-preserving jitter
    auto cl = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
    return {cl(target + dr), cl(target + dg), cl(target + db)};
}

}  // namespace

const char* tier_name(Tier t) {
    switch (t) {
        case Tier::easy: return "easy";
        case Tier::medium: return "medium";
        default: return "hard";
    }
}

Tier tier_from_name(const std::string& s) {
    if (s == "easy") return Tier::easy;
    if (s == "medium") return Tier::medium;
    if (s == "hard") return Tier::hard;
    throw ConfigError("unknown tier: " + s);
}

Tensor<double> render_hr(const std::string& label, u64 style_seed, const priors::GlyphAtlas& atlas) {
    if (!priors::label_valid(label))
        throw IoError("render_hr: invalid label '" + label + "'");
    Rng rng(style_seed, kStyleStream);
    const auto bg = seeded_color(rng, 0.10, 0.40);
    const auto fg = seeded_color(rng, 0.60, 0.95);

    Tensor<double> im({priors::kImgH, priors::kImgW, 3});
    for (i64 y = 0; y < priors::kImgH; ++y)
        for (i64 x = 0; x < priors::kImgW; ++x)
            for (i64 c = 0; c < 3; ++c) im.at(y, x, c) = bg[static_cast<size_t>(c)];
    const std::vector<double> fgv(fg.begin(), fg.end());
    for (size_t k = 0; k < label.size(); ++k)
        priors::raster_glyph(im, static_cast<i64>(k), atlas.glyph(label[k]), fgv);
    return im;
}

Tensor<double> degrade_to_lr(const Tensor<double>& hr, const DegradationConfig& cfg, Tier tier,
                             u64 noise_seed) {
    Tensor<double> blurred = img::gaussian_blur(hr, cfg.blur_for(tier));
    Tensor<double> lr = img::box_down2(blurred);
    if (cfg.noise_sigma > 0) {
        Rng rng(noise_seed, kNoiseStream);
        for (i64 i = 0; i < lr.numel(); ++i) lr[i] += rng.gaussian(cfg.noise_sigma);
    }
    return img::clamp01(lr);
}

SamplePair regenerate_sample(const std::string& id, const std::string& label, u64 seed, Tier tier,
                             const DegradationConfig& cfg) {
    SamplePair s;
    s.id = id;
    s.label = label;
    s.tier = tier;
    s.seed = seed;
    s.hr = img::quantize8(render_hr(label, seed));
    s.lr = img::quantize8(degrade_to_lr(s.hr, cfg, tier, seed));
    return s;
}

std::vector<ManifestRow> DatasetManifest::split(const std::string& name) const {
    std::vector<ManifestRow> out;
    for (const ManifestRow& r : rows)
        if (r.split == name) out.push_back(r);
    return out;
}

DatasetManifest build_dataset(i64 n_train, i64 n_test_per_tier, u64 master_seed,
                              const std::string& out_dir, bool force, const DegradationConfig& cfg) {
    const fs::path dir(out_dir);
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) throw IoError("output dir exists and is not empty: " + out_dir + " (use force)");
        fs::remove_all(dir);
    }
    fs::create_directories(dir / "lr");
    fs::create_directories(dir / "hr");

    Rng label_rng(master_seed, 1);
    Rng assign_rng(master_seed, 2);
    std::set<std::string> used;
    auto next_label = [&] {
        static constexpr const char* cs = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
        for (;;) {
            const i64 len = 1 + label_rng.uniform_int(priors::kMaxLabelLen);
            std::string s;
            for (i64 i = 0; i < len; ++i) s.push_back(cs[label_rng.uniform_int(36)]);
            if (used.insert(s).second) return s;  // all labels distinct => splits disjoint
        }
    };

    DatasetManifest m;
    m.dir = out_dir;
    auto emit = [&](const std::string& id, const std::string& split, Tier tier) {
        const std::string label = next_label();
        const u64 seed = assign_rng.next_u64();
        SamplePair s = regenerate_sample(id, label, seed, tier, cfg);
        ManifestRow row{id, label, tier_name(tier), split, seed,
                        "lr/" + id + ".ppm", "hr/" + id + ".ppm"};
        img::write_ppm((dir / row.lr_path).string(), s.lr);
        img::write_ppm((dir / row.hr_path).string(), s.hr);
        m.rows.push_back(std::move(row));
    };

    char buf[64];
    for (i64 i = 0; i < n_train; ++i) {
        std::snprintf(buf, sizeof(buf), "train_%05lld", static_cast<long long>(i));
        emit(buf, "train", static_cast<Tier>(assign_rng.uniform_int(3)));
    }
    for (Tier t : {Tier::easy, Tier::medium, Tier::hard})
        for (i64 i = 0; i < n_test_per_tier; ++i) {
            std::snprintf(buf, sizeof(buf), "test_%s_%04lld", tier_name(t),
                          static_cast<long long>(i));
            emit(buf, "test", t);
        }

    std::ofstream os(dir / "manifest.csv");
    if (!os) throw IoError("cannot write manifest in " + out_dir);
    os << "id,label,tier,split,seed,lr_path,hr_path\n";
    for (const ManifestRow& r : m.rows)
        os << r.id << ',' << r.label << ',' << r.tier << ',' << r.split << ',' << r.seed << ','
           << r.lr_path << ',' << r.hr_path << '\n';
    return m;
}

DatasetManifest load_dataset(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.csv");
    if (!is) throw IoError("cannot open manifest.csv in " + dir);
    DatasetManifest m;
    m.dir = dir;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        ManifestRow r;
        std::string seed;
        auto field = [&](std::string& out) {
            if (!std::getline(ss, out, ',')) throw IoError("bad manifest row: " + line);
        };
        field(r.id);
        field(r.label);
        field(r.tier);
        field(r.split);
        field(seed);
        field(r.lr_path);
        field(r.hr_path);
        r.seed = std::stoull(seed);
        m.rows.push_back(std::move(r));
    }
    return m;
}

SamplePair load_sample(const DatasetManifest& m, const ManifestRow& row) {
    SamplePair s;
    s.id = row.id;
    s.label = row.label;
    s.tier = tier_from_name(row.tier);
    s.seed = row.seed;
    s.lr = img::read_ppm((fs::path(m.dir) / row.lr_path).string());
    s.hr = img::read_ppm((fs::path(m.dir) / row.hr_path).string());
    return s;
}

}  // namespace dpmn::synth
