#include "dpmn/metrics.hpp"

#include <cmath>

namespace dpmn::metrics {

namespace {

i64 reflect(i64 i, i64 n) {
    if (n == 1) return 0;
    const i64 period = 2 * (n - 1);
    i64 j = ((i % period) + period) % period;
    return j < n ? j : period - j;
}

constexpr i64 kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const double* ssim_window() {
    static double w[kWin * kWin];
    static bool init = false;
    if (!init) {
        double sum = 0;
        for (i64 y = 0; y < kWin; ++y)
            for (i64 x = 0; x < kWin; ++x) {
                const double dy = static_cast<double>(y - kWin / 2);
                const double dx = static_cast<double>(x - kWin / 2);
                w[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
                sum += w[y * kWin + x];
            }
        for (i64 i = 0; i < kWin * kWin; ++i) w[i] /= sum;
        init = true;
    }
    return w;
}

}  // namespace

double psnr(const Tensor<double>& a, const Tensor<double>& b) {
    if (!a.same_shape(b))
        fail_shape("psnr", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double mse = 0;
    for (i64 i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0) return 100.0;
    const double db = 10.0 * std::log10(1.0 / mse);
    return db > 100.0 ? 100.0 : db;
}

double ssim(const Tensor<double>& a, const Tensor<double>& b) {
    if (!a.same_shape(b))
        fail_shape("ssim", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const i64 H = a.dim(0), W = a.dim(1), C = a.c();
    const double* win = ssim_window();
    const i64 r = kWin / 2;

    double total = 0;
    for (i64 c = 0; c < C; ++c) {
        double channel = 0;
        for (i64 y = 0; y < H; ++y)
            for (i64 x = 0; x < W; ++x) {
                double mua = 0, mub = 0, saa = 0, sbb = 0, sab = 0;
                for (i64 dy = -r; dy <= r; ++dy)
                    for (i64 dx = -r; dx <= r; ++dx) {
                        const double wv = win[(dy + r) * kWin + (dx + r)];
                        const double va = a.at(reflect(y + dy, H), reflect(x + dx, W), c);
                        const double vb = b.at(reflect(y + dy, H), reflect(x + dx, W), c);
                        mua += wv * va;
                        mub += wv * vb;
                        saa += wv * va * va;
                        sbb += wv * vb * vb;
                        sab += wv * va * vb;
                    }
                const double var_a = saa - mua * mua;
                const double var_b = sbb - mub * mub;
                const double cov = sab - mua * mub;
                channel += ((2 * mua * mub + kC1) * (2 * cov + kC2)) /
                           ((mua * mua + mub * mub + kC1) * (var_a + var_b + kC2));
            }
        total += channel / static_cast<double>(H * W);
    }
    return total / static_cast<double>(C);
}

bool labels_match(const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const char ca = a[i] >= 'a' && a[i] <= 'z' ? static_cast<char>(a[i] - 'a' + 'A') : a[i];
        const char cb = b[i] >= 'a' && b[i] <= 'z' ? static_cast<char>(b[i] - 'a' + 'A') : b[i];
        if (ca != cb) return false;
    }
    return true;
}

double recognition_accuracy(const std::vector<std::string>& predictions,
                            const std::vector<std::string>& labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw ShapeError("recognition_accuracy: need a non-empty, equal-sized prediction/label set");
    i64 hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i)
        hits += labels_match(predictions[i], labels[i]) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

}  // namespace dpmn::metrics
