#include "dpmn/priors.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace dpmn::priors {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

i64 luma_bin(double l) {
    i64 b = static_cast<i64>(clamp01(l) * 256.0);
    return b > 255 ? 255 : b;
}

// argmax over all 256 splits of between-class variance; ties take the lowest
// threshold. Classes are bins <= t and bins > t.
i64 otsu_split(const std::array<i64, 256>& hist, i64 total) {
    double sum_all = 0;
    for (i64 b = 0; b < 256; ++b) sum_all += static_cast<double>(b) * hist[static_cast<size_t>(b)];
    double best = -1.0;
    i64 best_t = 0;
    double w0 = 0, sum0 = 0;
    for (i64 t = 0; t < 255; ++t) {
        w0 += static_cast<double>(hist[static_cast<size_t>(t)]);
        sum0 += static_cast<double>(t) * hist[static_cast<size_t>(t)];
        const double w1 = static_cast<double>(total) - w0;
        if (w0 <= 0 || w1 <= 0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }
    return best_t;
}

// Binarize an arbitrary rectangle of lumas; all zeros when variance < 1e-6.
void binarize_lumas(const std::vector<double>& lumas, std::vector<std::uint8_t>& out) {
    const i64 n = static_cast<i64>(lumas.size());
    out.assign(lumas.size(), 0);
    double mu = 0;
    for (double l : lumas) mu += l;
    mu /= static_cast<double>(n);
    double var = 0;
    for (double l : lumas) var += (l - mu) * (l - mu);
    var /= static_cast<double>(n);
    if (var < 1e-6) return;

    std::array<i64, 256> hist{};
    for (double l : lumas) hist[static_cast<size_t>(luma_bin(l))]++;
    const i64 t = otsu_split(hist, n);
    for (i64 i = 0; i < n; ++i) out[static_cast<size_t>(i)] = luma_bin(lumas[static_cast<size_t>(i)]) > t ? 1 : 0;
}

char to_upper_ascii(char c) {
    return c >= 'a' && c <= 'z' ? static_cast<char>(c - 'a' + 'A') : c;
}

char to_lower_ascii(char c) {
    return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace

const GlyphAtlas& GlyphAtlas::builtin() {
    static const GlyphAtlas atlas = GlyphAtlas::parse(kBuiltinAtlasText);
    return atlas;
}

GlyphAtlas GlyphAtlas::parse(const std::string& text) {
    GlyphAtlas atlas;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.size() < 2 + kGlyphW * kGlyphH)
            throw IoError("atlas line too short: '" + line + "'");
        const char c = line[0];
        const int idx = index_of(c);
        if (idx < 0) throw IoError(std::string("atlas glyph outside charset: '") + c + "'");
        GlyphBitmap bm{};
        for (i64 i = 0; i < kGlyphW * kGlyphH; ++i) {
            const char bit = line[static_cast<size_t>(2 + i)];
            if (bit != '0' && bit != '1')
                throw IoError("atlas bitmap must be binary digits: '" + line + "'");
            bm[static_cast<size_t>(i)] = bit == '1' ? 1 : 0;
        }
        atlas.glyphs_[static_cast<size_t>(idx)] = bm;
        atlas.present_[static_cast<size_t>(idx)] = true;
    }
    atlas.validate();
    return atlas;
}

GlyphAtlas GlyphAtlas::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open atlas: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

int GlyphAtlas::index_of(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return 26 + (c - 'a');
    if (c >= '0' && c <= '9') return 52 + (c - '0');
    return -1;
}

const GlyphBitmap& GlyphAtlas::glyph(char c) const {
    const int idx = index_of(c);
    if (idx < 0 || !present_[static_cast<size_t>(idx)])
        throw IoError(std::string("no glyph for character '") + c + "'");
    return glyphs_[static_cast<size_t>(idx)];
}

void GlyphAtlas::validate() const {
    for (i64 i = 0; i < kGlyphCount; ++i)
        if (!present_[static_cast<size_t>(i)])
            throw IoError(std::string("atlas missing glyph for '") + kCharset[i] + "'");
    for (i64 i = 0; i < kGlyphCount; ++i)
        for (i64 j = i + 1; j < kGlyphCount; ++j)
            if (glyphs_[static_cast<size_t>(i)] == glyphs_[static_cast<size_t>(j)])
                throw IoError(std::string("duplicate glyph bitmaps for '") + kCharset[i] + "' and '" +
                              kCharset[j] + "'");
}

bool label_valid(const std::string& text) {
    if (text.size() > static_cast<size_t>(kMaxLabelLen)) return false;
    for (char c : text)
        if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'))) return false;
    return true;
}

Tensor<double> binarize(const Tensor<double>& image) {
    if (image.rank() != 3 || image.dim(2) != 3)
        fail_shape("binarize", "expected HxWx3, got " + shape_str(image.shape()));
    const i64 H = image.dim(0), W = image.dim(1);
    std::vector<double> lumas(static_cast<size_t>(H * W));
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
            lumas[static_cast<size_t>(y * W + x)] =
                luma(clamp01(image.at(y, x, 0)), clamp01(image.at(y, x, 1)), clamp01(image.at(y, x, 2)));
    std::vector<std::uint8_t> bits;
    binarize_lumas(lumas, bits);
    Tensor<double> mask({H, W, 1});
    for (i64 i = 0; i < H * W; ++i) mask[i] = bits[static_cast<size_t>(i)];
    return mask;
}

void raster_glyph(Tensor<double>& image, i64 cell, const GlyphBitmap& bm,
                  const std::vector<double>& fg) {
    const i64 x0 = cell * kCellSize + kMargin;
    const i64 y0 = kBandY + kMargin;
    const i64 nc = std::min<i64>(static_cast<i64>(fg.size()), image.c());
    for (i64 r = 0; r < kBoxSize; ++r)
        for (i64 c = 0; c < kBoxSize; ++c)
            if (bm[static_cast<size_t>(box_src_row(r) * kGlyphW + box_src_col(c))])
                for (i64 ch = 0; ch < nc; ++ch) image.at(y0 + r, x0 + c, ch) = fg[static_cast<size_t>(ch)];
}

Recognition recognize(const Tensor<double>& image, const GlyphAtlas& atlas) {
    if (image.rank() != 3 || image.dim(0) != kImgH || image.dim(1) != kImgW || image.dim(2) != 3)
        fail_shape("recognize", "expected 32x128x3 cell layout, got " + shape_str(image.shape()));

    Recognition rec;
    std::vector<double> lumas(static_cast<size_t>(kCellSize * kCellSize));
    std::vector<std::uint8_t> bits;
    for (i64 cell = 0; cell < kCells; ++cell) {
        const i64 x0 = cell * kCellSize;
        for (i64 r = 0; r < kCellSize; ++r)
            for (i64 c = 0; c < kCellSize; ++c) {
                const i64 y = kBandY + r, x = x0 + c;
                lumas[static_cast<size_t>(r * kCellSize + c)] =
                    luma(clamp01(image.at(y, x, 0)), clamp01(image.at(y, x, 1)),
                         clamp01(image.at(y, x, 2)));
            }
        binarize_lumas(lumas, bits);

        // block-majority downscale of the glyph box to 5x7
        GlyphBitmap down{};
        std::array<i64, kGlyphW * kGlyphH> on{}, count{};
        for (i64 r = 0; r < kBoxSize; ++r)
            for (i64 c = 0; c < kBoxSize; ++c) {
                const i64 pos = box_src_row(r) * kGlyphW + box_src_col(c);
                count[static_cast<size_t>(pos)]++;
                on[static_cast<size_t>(pos)] +=
                    bits[static_cast<size_t>((kMargin + r) * kCellSize + kMargin + c)];
            }
        for (i64 p = 0; p < kGlyphW * kGlyphH; ++p)
            down[static_cast<size_t>(p)] = 2 * on[static_cast<size_t>(p)] > count[static_cast<size_t>(p)] ? 1 : 0;

        // IoU against every atlas glyph; ties keep the first charset entry
        double best = -1.0;
        char best_char = 0;
        for (i64 gi = 0; gi < GlyphAtlas::kGlyphCount; ++gi) {
            const char gc = GlyphAtlas::kCharset[gi];
            const GlyphBitmap& bm = atlas.glyph(gc);
            i64 inter = 0, uni = 0;
            for (i64 p = 0; p < kGlyphW * kGlyphH; ++p) {
                const bool a = down[static_cast<size_t>(p)] != 0;
                const bool b = bm[static_cast<size_t>(p)] != 0;
                inter += a && b;
                uni += a || b;
            }
            const double score = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
            if (score > best) {
                best = score;
                best_char = gc;
            }
        }
        if (best < kCellScoreThreshold) break;  // blank cell terminates the label
        rec.text.push_back(to_upper_ascii(best_char));
        rec.cell_scores.push_back(best);
    }
    return rec;
}

Tensor<double> render_graphic_prior(const std::string& label, const GlyphAtlas& atlas) {
    if (!label_valid(label))
        throw IoError("label must be uppercase+digits, length <= 8: '" + label + "'");
    Tensor<double> out({kImgH, kImgW, 2});
    for (size_t k = 0; k < label.size(); ++k) {
        const char up = label[k];
        const char low = to_lower_ascii(up);  // digits render identically
        const GlyphBitmap& bu = atlas.glyph(up);
        const GlyphBitmap& bl = atlas.glyph(low);
        const i64 x0 = static_cast<i64>(k) * kCellSize + kMargin;
        const i64 y0 = kBandY + kMargin;
        for (i64 r = 0; r < kBoxSize; ++r)
            for (i64 c = 0; c < kBoxSize; ++c) {
                const i64 pos = box_src_row(r) * kGlyphW + box_src_col(c);
                if (bu[static_cast<size_t>(pos)]) out.at(y0 + r, x0 + c, 0) = 1.0;
                if (bl[static_cast<size_t>(pos)]) out.at(y0 + r, x0 + c, 1) = 1.0;
            }
    }
    return out;
}

PriorPair make_priors(const Tensor<double>& image, const GlyphAtlas& atlas) {
    PriorPair pair;
    pair.structure = binarize(image);
    pair.graphic = render_graphic_prior(recognize(image, atlas).text, atlas);
    return pair;
}

}  // namespace dpmn::priors
