#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "dpmn/harness.hpp"
#include "dpmn/losses.hpp"
#include "test_util.hpp"

using namespace dpmn;
using namespace dpmn::loss;

namespace {

// direct-formula oracle for the image loss
double img_loss_oracle(const Tensor<double>& pred, const Tensor<double>& target, double wp,
                       double wg) {
    const i64 H = pred.dim(0), W = pred.dim(1), C = pred.c();
    double mse = 0;
    for (i64 i = 0; i < pred.numel(); ++i) {
        const double d = pred[i] - target[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.numel());
    double l1 = 0;
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
            for (i64 c = 0; c < C; ++c) {
                const double pdx = x + 1 < W ? pred.at(y, x + 1, c) - pred.at(y, x, c) : 0;
                const double tdx = x + 1 < W ? target.at(y, x + 1, c) - target.at(y, x, c) : 0;
                const double pdy = y + 1 < H ? pred.at(y + 1, x, c) - pred.at(y, x, c) : 0;
                const double tdy = y + 1 < H ? target.at(y + 1, x, c) - target.at(y, x, c) : 0;
                l1 += std::abs(tdx - pdx) + std::abs(tdy - pdy);
            }
    l1 /= static_cast<double>(pred.numel() * 2);
    return wp * mse + wg * l1;
}

}  // namespace

TEST_CASE("img_loss is zero iff images are identical") {
    Rng rng(601);
    Tensor<double> x = testutil::rand_tensor({4, 4, 3}, rng, 0, 1);
    auto l = img_loss(constant(x.clone()), constant(x.clone()), 1.0, 1.0);
    CHECK(l->value[0] == 0.0);
    Tensor<double> y = x.clone();
    y[7] += 0.25;
    auto l2 = img_loss(constant(y), constant(x.clone()), 1.0, 1.0);
    CHECK(l2->value[0] > 0.0);
}

TEST_CASE("a constant offset hits only the pixel term") {
    Rng rng(607);
    Tensor<double> x = testutil::rand_tensor({6, 8, 3}, rng, 0.1, 0.7);
    Tensor<double> shifted = x.clone();
    const double c = 0.2;
    for (i64 i = 0; i < shifted.numel(); ++i) shifted[i] += c;
    const double lp = 0.8, lg = 1.7;
    auto l = img_loss(constant(shifted), constant(x.clone()), lp, lg);
    CHECK(l->value[0] == doctest::Approx(lp * c * c).epsilon(1e-12));

    // gradient fields are unchanged by global offsets
    auto g1 = image_grad(constant(x.clone()));
    auto g2 = image_grad(constant(shifted.clone()));
    CHECK(max_abs_diff(g1->value, g2->value) < 1e-12);
}

TEST_CASE("img_loss matches the direct-formula oracle") {
    Rng rng(613);
    for (int rep = 0; rep < 5; ++rep) {
        Tensor<double> a = testutil::rand_tensor({4, 4, 3}, rng, 0, 1);
        Tensor<double> b = testutil::rand_tensor({4, 4, 3}, rng, 0, 1);
        const double wp = rng.uniform(0.2, 2), wg = rng.uniform(0.2, 2);
        auto l = img_loss(constant(a.clone()), constant(b.clone()), wp, wg);
        CHECK(l->value[0] == doctest::Approx(img_loss_oracle(a, b, wp, wg)).epsilon(1e-12));
    }
}

TEST_CASE("branch_loss sums per-step losses") {
    Rng rng(617);
    Tensor<double> t = testutil::rand_tensor({4, 6, 3}, rng, 0, 1);
    Tensor<double> a = testutil::rand_tensor({4, 6, 3}, rng, 0, 1);
    Tensor<double> b = testutil::rand_tensor({4, 6, 3}, rng, 0, 1);
    auto target = constant(t.clone());
    auto single = branch_loss({constant(a.clone())}, target, 1, 1);
    CHECK(single->value[0] ==
          doctest::Approx(img_loss(constant(a.clone()), target, 1, 1)->value[0]).epsilon(1e-14));

    auto dup = branch_loss({constant(a.clone()), constant(a.clone())}, target, 1, 1);
    CHECK(dup->value[0] == doctest::Approx(2 * single->value[0]).epsilon(1e-12));

    auto two = branch_loss({constant(a.clone()), constant(b.clone())}, target, 1, 1);
    const double oracle = img_loss_oracle(a, t, 1, 1) + img_loss_oracle(b, t, 1, 1);
    CHECK(two->value[0] == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("total_loss is a plain sum at unit weights and linear in each lambda") {
    Rng rng(619);
    Tensor<double> t = testutil::rand_tensor({4, 6, 3}, rng, 0, 1);
    Tensor<double> m = testutil::rand_tensor({4, 6, 3}, rng, 0, 1);
    Tensor<double> g = testutil::rand_tensor({4, 6, 3}, rng, 0, 1);
    Tensor<double> s = testutil::rand_tensor({4, 6, 3}, rng, 0, 1);
    auto target = constant(t.clone());

    auto total = total_loss(constant(m.clone()), {constant(g.clone())}, {constant(s.clone())},
                            target, {});
    const double plain = img_loss_oracle(m, t, 1, 1) + img_loss_oracle(g, t, 1, 1) +
                         img_loss_oracle(s, t, 1, 1);
    CHECK(total->value[0] == doctest::Approx(plain).epsilon(1e-12));

    LossWeights cmm_only;
    cmm_only.branch_graphic = 0;
    cmm_only.branch_structure = 0;
    auto co = total_loss(constant(m.clone()), {constant(g.clone())}, {constant(s.clone())}, target,
                         cmm_only);
    CHECK(co->value[0] == doctest::Approx(img_loss_oracle(m, t, 1, 1)).epsilon(1e-12));

    LossWeights wl;
    wl.cmm = 2.5;
    auto scaled = total_loss(constant(m.clone()), {constant(g.clone())}, {constant(s.clone())},
                             target, wl);
    CHECK(scaled->value[0] == doctest::Approx(plain + 1.5 * img_loss_oracle(m, t, 1, 1))
                                  .epsilon(1e-12));

    LossWeights bad;
    bad.cmm = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("quick gradcheck suite passes every block and loss at 1e-4") {
    std::ostringstream log;
    harness::SuiteReport report = harness::gradcheck_suite(/*quick=*/true, log);
    INFO(log.str());
    for (const auto& e : report.entries) {
        INFO(e.name, " max_rel=", e.max_rel);
        CHECK(e.pass);
    }
    CHECK(report.all_pass);
}
