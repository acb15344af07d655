#include "dpmn/image_ops.hpp"

#include <cmath>
#include <fstream>

namespace dpmn::img {

namespace {

// reflect without repeating the edge pixel: -1 -> 1, n -> n-2
i64 reflect(i64 i, i64 n) {
    if (n == 1) return 0;
    const i64 period = 2 * (n - 1);
    i64 j = ((i % period) + period) % period;
    return j < n ? j : period - j;
}

std::vector<double> gaussian_kernel(double sigma) {
    const i64 radius = static_cast<i64>(std::ceil(2.0 * sigma));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0;
    for (i64 i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace

Tensor<double> clamp01(const Tensor<double>& im) {
    Tensor<double> out = im.clone();
    for (i64 i = 0; i < out.numel(); ++i) out[i] = out[i] < 0 ? 0 : (out[i] > 1 ? 1 : out[i]);
    return out;
}

Tensor<double> gaussian_blur(const Tensor<double>& im, double sigma) {
    if (sigma <= 0) return im.clone();
    const std::vector<double> k = gaussian_kernel(sigma);
    const i64 radius = static_cast<i64>(k.size() / 2);
    const i64 H = im.dim(0), W = im.dim(1), C = im.c();

    Tensor<double> tmp(im.shape());
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
            for (i64 c = 0; c < C; ++c) {
                double s = 0;
                for (i64 t = -radius; t <= radius; ++t)
                    s += k[static_cast<size_t>(t + radius)] * im.at(y, reflect(x + t, W), c);
                tmp.at(y, x, c) = s;
            }
    Tensor<double> out(im.shape());
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
            for (i64 c = 0; c < C; ++c) {
                double s = 0;
                for (i64 t = -radius; t <= radius; ++t)
                    s += k[static_cast<size_t>(t + radius)] * tmp.at(reflect(y + t, H), x, c);
                out.at(y, x, c) = s;
            }
    return out;
}

Tensor<double> box_down2(const Tensor<double>& im) {
    const i64 H = im.dim(0) / 2, W = im.dim(1) / 2, C = im.c();
    Tensor<double> out({H, W, C});
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
            for (i64 c = 0; c < C; ++c)
                out.at(y, x, c) = 0.25 * (im.at(2 * y, 2 * x, c) + im.at(2 * y, 2 * x + 1, c) +
                                          im.at(2 * y + 1, 2 * x, c) + im.at(2 * y + 1, 2 * x + 1, c));
    return out;
}

namespace {

// Catmull-Rom weights (a = -0.5) at phase t
void cubic_weights(double t, double w[4]) {
    const double a = -0.5;
    const double t2 = t * t, t3 = t2 * t;
    w[0] = a * (t3 - 2 * t2 + t);
    w[1] = (a + 2) * t3 - (a + 3) * t2 + 1;
    w[2] = -(a + 2) * t3 + (2 * a + 3) * t2 - a * t;
    w[3] = a * (t2 - t3);
}

}  // namespace

Tensor<double> bicubic_up2(const Tensor<double>& im) {
    const i64 H = im.dim(0), W = im.dim(1), C = im.c();
    const i64 OH = 2 * H, OW = 2 * W;
    Tensor<double> out({OH, OW, C});
    // center alignment: src = (dst + 0.5)/2 - 0.5, so
    // dst even: base = dst/2 - 1, phase 0.75; dst odd: base = (dst-1)/2, phase 0.25
    double wx[2][4], wy[2][4];
    cubic_weights(0.75, wx[0]);
    cubic_weights(0.25, wx[1]);
    cubic_weights(0.75, wy[0]);
    cubic_weights(0.25, wy[1]);

    for (i64 oy = 0; oy < OH; ++oy) {
        const i64 by = (oy % 2 == 0) ? oy / 2 - 1 : (oy - 1) / 2;
        const double* kwy = wy[oy % 2];
        for (i64 ox = 0; ox < OW; ++ox) {
            const i64 bx = (ox % 2 == 0) ? ox / 2 - 1 : (ox - 1) / 2;
            const double* kwx = wx[ox % 2];
            for (i64 c = 0; c < C; ++c) {
                double s = 0;
                for (i64 j = 0; j < 4; ++j) {  // taps at base-1 .. base+2
                    const i64 sy = reflect(by + j - 1, H);
                    double row = 0;
                    for (i64 i = 0; i < 4; ++i)
                        row += kwx[i] * im.at(sy, reflect(bx + i - 1, W), c);
                    s += kwy[j] * row;
                }
                out.at(oy, ox, c) = s < 0 ? 0 : (s > 1 ? 1 : s);
            }
        }
    }
    return out;
}

Tensor<double> nearest_up2(const Tensor<double>& im) {
    const i64 H = im.dim(0), W = im.dim(1), C = im.c();
    Tensor<double> out({2 * H, 2 * W, C});
    for (i64 y = 0; y < 2 * H; ++y)
        for (i64 x = 0; x < 2 * W; ++x)
            for (i64 c = 0; c < C; ++c) out.at(y, x, c) = im.at(y / 2, x / 2, c);
    return out;
}

Tensor<double> quantize8(const Tensor<double>& im) {
    Tensor<double> out(im.shape());
    for (i64 i = 0; i < im.numel(); ++i) {
        double v = im[i] < 0 ? 0 : (im[i] > 1 ? 1 : im[i]);
        const int q = static_cast<int>(std::lround(v * 255.0));
        out[i] = static_cast<double>(q) / 255.0;
    }
    return out;
}

void write_ppm(const std::string& path, const Tensor<double>& im) {
    if (im.rank() != 3 || im.dim(2) != 3)
        fail_shape("write_ppm", "expected HxWx3, got " + shape_str(im.shape()));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P6\n" << im.dim(1) << " " << im.dim(0) << "\n255\n";
    for (i64 i = 0; i < im.numel(); ++i) {
        double v = im[i] < 0 ? 0 : (im[i] > 1 ? 1 : im[i]);
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    if (!os) throw IoError("write failed: " + path);
}

Tensor<double> read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw IoError("not a P6 ppm: " + path);
    i64 w = 0, h = 0, maxval = 0;
    is >> w >> h >> maxval;
    if (maxval != 255) throw IoError("expected maxval 255 in " + path);
    is.get();  // single whitespace after header
    Tensor<double> im({h, w, 3});
    std::vector<char> buf(static_cast<size_t>(im.numel()));
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!is) throw IoError("truncated ppm: " + path);
    for (i64 i = 0; i < im.numel(); ++i)
        im[i] = static_cast<double>(static_cast<unsigned char>(buf[static_cast<size_t>(i)])) / 255.0;
    return im;
}

}  // namespace dpmn::img
