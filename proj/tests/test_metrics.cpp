#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dpmn/metrics.hpp"
#include "test_util.hpp"

using namespace dpmn;
using namespace dpmn::metrics;

namespace {

// naive sliding-window SSIM oracle, written independently of the production
// path: per pixel, accumulate the 11x11 Gaussian window with reflection
double ssim_oracle(const Tensor<double>& a, const Tensor<double>& b) {
    const i64 H = a.dim(0), W = a.dim(1), C = a.c();
    const double c1 = 0.0001, c2 = 0.0009;
    double win[11][11];
    double sum = 0;
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) {
            win[y][x] = std::exp(-((x - 5.0) * (x - 5.0) + (y - 5.0) * (y - 5.0)) / (2 * 1.5 * 1.5));
            sum += win[y][x];
        }
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) win[y][x] /= sum;

    auto ref = [](i64 i, i64 n) {
        if (n == 1) return static_cast<i64>(0);
        const i64 p = 2 * (n - 1);
        i64 j = ((i % p) + p) % p;
        return j < n ? j : p - j;
    };

    double total = 0;
    for (i64 c = 0; c < C; ++c) {
        double acc = 0;
        for (i64 y = 0; y < H; ++y)
            for (i64 x = 0; x < W; ++x) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int dy = -5; dy <= 5; ++dy)
                    for (int dx = -5; dx <= 5; ++dx) {
                        const double w = win[dy + 5][dx + 5];
                        const double pa = a.at(ref(y + dy, H), ref(x + dx, W), c);
                        const double pb = b.at(ref(y + dy, H), ref(x + dx, W), c);
                        ma += w * pa;
                        mb += w * pb;
                        va += w * pa * pa;
                        vb += w * pb * pb;
                        cov += w * pa * pb;
                    }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        total += acc / static_cast<double>(H * W);
    }
    return total / static_cast<double>(C);
}

}  // namespace

TEST_CASE("psnr analytic cases") {
    Tensor<double> zeros({4, 4, 3});
    Tensor<double> ones = Tensor<double>::full({4, 4, 3}, 1.0);
    CHECK(psnr(zeros, zeros) == 100.0);  // identical -> cap
    CHECK(std::abs(psnr(zeros, ones) - 0.0) < 1e-12);  // MSE 1 -> 0 dB
    Tensor<double> a({5, 5, 1}), b({5, 5, 1});
    for (i64 i = 0; i < a.numel(); ++i) b[i] = 0.1;  // MSE 0.01 -> 20 dB
    CHECK(std::abs(psnr(a, b) - 20.0) < 1e-12);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, zeros), ShapeError);
}

TEST_CASE("ssim of an image with itself is 1") {
    Rng rng(211);
    Tensor<double> x = testutil::rand_tensor({16, 16, 3}, rng, 0, 1);
    CHECK(std::abs(ssim(x, x) - 1.0) < 1e-9);
}

TEST_CASE("ssim on constant images follows the closed form") {
    const double av = 0.3, bv = 0.7, c1 = 0.0001;
    Tensor<double> a = Tensor<double>::full({12, 12, 1}, av);
    Tensor<double> b = Tensor<double>::full({12, 12, 1}, bv);
    CHECK(std::abs(ssim(a, a.clone()) - 1.0) < 1e-12);
    const double expected = (2 * av * bv + c1) / (av * av + bv * bv + c1);  // variance terms vanish
    CHECK(std::abs(ssim(a, b) - expected) < 1e-12);
}

TEST_CASE("ssim matches the naive double-loop oracle") {
    Rng rng(223);
    for (int rep = 0; rep < 6; ++rep) {
        Tensor<double> a = testutil::rand_tensor({16, 16, 3}, rng, 0, 1);
        Tensor<double> b = testutil::rand_tensor({16, 16, 3}, rng, 0, 1);
        CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-9);
        CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
    }
}

TEST_CASE("recognition accuracy counting") {
    CHECK(recognition_accuracy({"AB", "C1"}, {"AB", "C1"}) == 1.0);
    CHECK(recognition_accuracy({"ab", "XX"}, {"AB", "C1"}) == 0.5);  // case-insensitive
    CHECK(recognition_accuracy({"", "C1"}, {"AB", "C1"}) == 0.5);
    CHECK_THROWS_AS(recognition_accuracy({}, {}), ShapeError);
}

TEST_CASE("tier decomposition recombines to the pooled mean") {
    Rng rng(227);
    std::vector<std::string> pred, label;
    std::vector<i64> tier_of;
    for (int i = 0; i < 300; ++i) {
        label.push_back("W" + std::to_string(i));
        pred.push_back(rng.uniform() < 0.6 ? label.back() : "X");
        tier_of.push_back(rng.uniform_int(3));
    }
    double pooled = recognition_accuracy(pred, label);
    double weighted = 0;
    for (i64 t = 0; t < 3; ++t) {
        std::vector<std::string> p, l;
        for (size_t i = 0; i < pred.size(); ++i)
            if (tier_of[i] == t) {
                p.push_back(pred[i]);
                l.push_back(label[i]);
            }
        weighted += recognition_accuracy(p, l) * static_cast<double>(p.size());
    }
    weighted /= static_cast<double>(pred.size());
    CHECK(std::abs(weighted - pooled) < 1e-12);
}
