#pragma once

#include <array>
#include <string>

#include "dpmn/tensor.hpp"

// Image-level prior generation: Otsu binarization for the structure mask and a
// template recognizer plus glyph rasterizer for the graphic prior. Everything
// here is a pure function of pixel values; no gradients flow through this
// module (callers wrap outputs as graph constants).

namespace dpmn::priors {

inline constexpr i64 kImgH = 32, kImgW = 128;
inline constexpr i64 kCellSize = 16, kCells = 8;
inline constexpr i64 kBandY = 8;    // vertical offset of the 16px glyph band
inline constexpr i64 kMargin = 1;   // inside each cell
inline constexpr i64 kBoxSize = 14; // glyph box = cell minus margins
inline constexpr i64 kGlyphW = 5, kGlyphH = 7;
inline constexpr double kCellScoreThreshold = 0.55;
inline constexpr i64 kMaxLabelLen = 8;

// Nearest-neighbor map from box coordinates (14x14) to glyph bitmap (5x7).
// The recognizer inverts the renderer through these same boundaries.
inline i64 box_src_row(i64 r) { return r * kGlyphH / kBoxSize; }
inline i64 box_src_col(i64 c) { return c * kGlyphW / kBoxSize; }

inline double luma(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

using GlyphBitmap = std::array<std::uint8_t, kGlyphW * kGlyphH>;  // row-major 5x7

extern const char* kBuiltinAtlasText;

class GlyphAtlas {
public:
    static constexpr const char* kCharset =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
    static constexpr i64 kGlyphCount = 62;

    static const GlyphAtlas& builtin();
    static GlyphAtlas parse(const std::string& text);
    static GlyphAtlas load(const std::string& path);

    static int index_of(char c);  // -1 when not in the charset
    const GlyphBitmap& glyph(char c) const;

    // charset complete, bits binary, no two bitmaps identical
    void validate() const;

private:
    std::array<GlyphBitmap, kGlyphCount> glyphs_{};
    std::array<bool, kGlyphCount> present_{};
};

// Labels are uppercase+digit strings of length 0..8 (empty = nothing legible).
bool label_valid(const std::string& text);

struct Recognition {
    std::string text;
    std::vector<double> cell_scores;  // one per emitted character
};

struct PriorPair {
    Tensor<double> graphic;    // 32x128x2 in {0,1}
    Tensor<double> structure;  // 32x128x1 in {0,1}
};

// Otsu threshold over a 256-bin luma histogram; all zeros when the luma
// variance is below 1e-6. Input is clamped to [0,1] first.
Tensor<double> binarize(const Tensor<double>& image);

// Per cell: binarize, block-majority downscale of the glyph box to 5x7, match
// against every atlas glyph by intersection-over-union. Cells scoring below
// the threshold emit nothing and terminate the label. The winning character is
// folded to upper case; ties break by charset order.
Recognition recognize(const Tensor<double>& image, const GlyphAtlas& atlas = GlyphAtlas::builtin());

// Channel 0 renders the label with uppercase glyphs, channel 1 with lowercase
// (digits are identical in both), left-aligned from cell 0.
Tensor<double> render_graphic_prior(const std::string& label,
                                    const GlyphAtlas& atlas = GlyphAtlas::builtin());

PriorPair make_priors(const Tensor<double>& image, const GlyphAtlas& atlas = GlyphAtlas::builtin());

// Rasterizes one glyph into an image cell: image(band, cell) = fg where the
// bitmap is set. Channels beyond fg.size() are untouched. Used by the prior
// renderer and the synthetic HR renderer so both share one geometry.
void raster_glyph(Tensor<double>& image, i64 cell, const GlyphBitmap& bm,
                  const std::vector<double>& fg);

}  // namespace dpmn::priors
