#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "dpmn/image_ops.hpp"
#include "dpmn/metrics.hpp"
#include "dpmn/priors.hpp"
#include "dpmn/synthdata.hpp"
#include "test_util.hpp"

using namespace dpmn;
using namespace dpmn::synth;
namespace fs = std::filesystem;

TEST_CASE("render_hr is deterministic and respects luma bands") {
    Tensor<double> a = render_hr("HI", 7);
    Tensor<double> b = render_hr("HI", 7);
    CHECK(bitwise_equal(a, b));
    CHECK_FALSE(bitwise_equal(a, render_hr("HI", 8)));

    // background pixel (corner) and a known glyph pixel
    const double bg = priors::luma(a.at(0, 0, 0), a.at(0, 0, 1), a.at(0, 0, 2));
    CHECK(bg >= 0.05);
    CHECK(bg <= 0.45);
    Tensor<double> empty = render_hr("", 7);
    for (i64 y = 0; y < 32; ++y)
        for (i64 x = 0; x < 128; ++x)
            for (i64 c = 0; c < 3; ++c) CHECK(empty.at(y, x, c) == empty.at(0, 0, c));
}

TEST_CASE("recognizer is exact on rendered HR images (seeded sweep)") {
    Rng rng(307);
    const std::string charset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    int fails = 0;
    for (int rep = 0; rep < 120; ++rep) {
        const i64 len = 1 + rng.uniform_int(8);
        std::string label;
        for (i64 i = 0; i < len; ++i) label.push_back(charset[rng.uniform_int(36)]);
        Tensor<double> hr = render_hr(label, rng.next_u64());
        if (priors::recognize(hr).text != label) ++fails;
    }
    CHECK(fails == 0);
}

TEST_CASE("degrade_to_lr limit case is a pure box downsample") {
    DegradationConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.blur_sigma_easy = 0.0;
    Tensor<double> hr = render_hr("BOX", 11);
    Tensor<double> lr = degrade_to_lr(hr, cfg, Tier::easy, 1);
    CHECK(bitwise_equal(lr, img::box_down2(hr)));
}

TEST_CASE("degraded outputs stay clipped to [0,1]") {
    DegradationConfig cfg;
    cfg.noise_sigma = 0.3;  // exaggerated noise to force clipping
    Tensor<double> lr = degrade_to_lr(render_hr("CLIP", 3), cfg, Tier::hard, 5);
    for (i64 i = 0; i < lr.numel(); ++i) {
        CHECK(lr[i] >= 0.0);
        CHECK(lr[i] <= 1.0);
    }
}

TEST_CASE("tiers strictly increase in blur and lose PSNR") {
    DegradationConfig cfg;
    CHECK(cfg.blur_sigma_easy < cfg.blur_sigma_medium);
    CHECK(cfg.blur_sigma_medium < cfg.blur_sigma_hard);

    Rng rng(311);
    const std::string charset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    double mean_psnr[3] = {0, 0, 0};
    const int n = 100;
    for (int i = 0; i < n; ++i) {
        const i64 len = 2 + rng.uniform_int(7);
        std::string label;
        for (i64 j = 0; j < len; ++j) label.push_back(charset[rng.uniform_int(36)]);
        const u64 seed = rng.next_u64();
        for (Tier t : {Tier::easy, Tier::medium, Tier::hard}) {
            SamplePair s = regenerate_sample("m", label, seed, t, cfg);
            mean_psnr[static_cast<int>(t)] += metrics::psnr(img::bicubic_up2(s.lr), s.hr);
        }
    }
    for (double& v : mean_psnr) v /= n;
    CHECK(mean_psnr[0] > mean_psnr[1]);
    CHECK(mean_psnr[1] > mean_psnr[2]);
}

TEST_CASE("regeneration from (label, seed, tier) is bitwise reproducible") {
    SamplePair a = regenerate_sample("r", "RESEED7", 991, Tier::medium, {});
    SamplePair b = regenerate_sample("r", "RESEED7", 991, Tier::medium, {});
    CHECK(bitwise_equal(a.hr, b.hr));
    CHECK(bitwise_equal(a.lr, b.lr));
}

TEST_CASE("ppm files round trip bitwise through quantize-once storage") {
    const std::string dir = testutil::tmp_dir("ppm");
    Rng rng(313);
    Tensor<double> im = img::quantize8(testutil::rand_tensor({16, 64, 3}, rng, 0, 1));
    img::write_ppm(dir + "/a.ppm", im);
    Tensor<double> back = img::read_ppm(dir + "/a.ppm");
    CHECK(bitwise_equal(im, back));
    img::write_ppm(dir + "/b.ppm", back);
    std::ifstream f1(dir + "/a.ppm", std::ios::binary), f2(dir + "/b.ppm", std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    CHECK(s1.substr(0, 2) == "P6");
}

TEST_CASE("build_dataset writes a deterministic, disjoint, loadable dataset") {
    const std::string d1 = testutil::tmp_dir("ds1");
    const std::string d2 = testutil::tmp_dir("ds2");
    DatasetManifest m1 = build_dataset(12, 4, 42, d1, true);
    DatasetManifest m2 = build_dataset(12, 4, 42, d2, true);
    REQUIRE(m1.rows.size() == 12 + 3 * 4);

    // identical bytes for identical seeds
    for (const auto& row : m1.rows) {
        std::ifstream f1(fs::path(d1) / row.lr_path, std::ios::binary);
        std::ifstream f2(fs::path(d2) / row.lr_path, std::ios::binary);
        std::string s1((std::istreambuf_iterator<char>(f1)), {});
        std::string s2((std::istreambuf_iterator<char>(f2)), {});
        CHECK(s1 == s2);
    }

    // train/test label multisets are disjoint
    std::set<std::string> train_labels, test_labels;
    for (const auto& row : m1.rows)
        (row.split == "train" ? train_labels : test_labels).insert(row.label);
    for (const auto& l : test_labels) CHECK(train_labels.count(l) == 0);

    // stored sample equals regenerated sample (quantize-once semantics)
    DatasetManifest loaded = load_dataset(d1);
    REQUIRE(loaded.rows.size() == m1.rows.size());
    const ManifestRow& row = loaded.rows[3];
    SamplePair from_disk = load_sample(loaded, row);
    SamplePair regen = regenerate_sample(row.id, row.label, row.seed, tier_from_name(row.tier), {});
    CHECK(bitwise_equal(from_disk.hr, regen.hr));
    CHECK(bitwise_equal(from_disk.lr, regen.lr));

    // refuse to clobber without force
    CHECK_THROWS_AS(build_dataset(2, 1, 1, d1, false), IoError);

    // test split is stratified per tier
    i64 per_tier[3] = {0, 0, 0};
    for (const auto& r : loaded.rows)
        if (r.split == "test") per_tier[static_cast<int>(tier_from_name(r.tier))]++;
    CHECK(per_tier[0] == 4);
    CHECK(per_tier[1] == 4);
    CHECK(per_tier[2] == 4);
}

TEST_CASE("bicubic upsample shape and range") {
    Rng rng(317);
    Tensor<double> lr = testutil::rand_tensor({16, 64, 3}, rng, 0, 1);
    Tensor<double> up = img::bicubic_up2(lr);
    REQUIRE(up.shape() == Shape{32, 128, 3});
    for (i64 i = 0; i < up.numel(); ++i) {
        CHECK(up[i] >= 0.0);
        CHECK(up[i] <= 1.0);
    }
    // constant image stays constant under bicubic resampling
    Tensor<double> flat = Tensor<double>::full({8, 8, 1}, 0.6);
    Tensor<double> upf = img::bicubic_up2(flat);
    for (i64 i = 0; i < upf.numel(); ++i) CHECK(std::abs(upf[i] - 0.6) < 1e-12);
}
