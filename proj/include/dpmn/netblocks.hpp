#pragma once

#include <memory>
#include <optional>
#include <string>

#include "dpmn/adam.hpp"
#include "dpmn/ops.hpp"
#include "dpmn/ops_image.hpp"

// Network building blocks: patch embedding, dynamic-window multi-head cross
// attention (plain and shifted), locally-enhanced feed-forward, the prior
// guided refinement module, the complementation module and the small frozen
// baseline SR net.

namespace dpmn::net {

struct NetConfig {
    int n_pgrm = 3;
    std::vector<int> window_sizes = {2, 4, 8};
    int heads = 6;
    int patch = 2;
    int embed_dim = 48;
    double alpha = 0.5;       // fusion ratio at inference
    bool dynamic_gate = true; // false for the fixed-window variant

    // grid is the token grid (image dims / patch)
    void validate(i64 img_h, i64 img_w) const {
        const auto fail = [](const std::string& m) { throw ConfigError("net config: " + m); };
        if (n_pgrm < 1) fail("n_pgrm must be >= 1");
        if (window_sizes.empty()) fail("need at least one window size");
        if (heads % static_cast<int>(window_sizes.size()) != 0)
            fail("heads must divide evenly across window sizes");
        if (embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
        if (img_h % patch || img_w % patch) fail("image dims must be divisible by patch");
        const i64 gh = img_h / patch, gw = img_w / patch;
        for (int w : window_sizes)
            if (w < 1 || gh % w || gw % w)
                fail("token grid " + std::to_string(gh) + "x" + std::to_string(gw) +
                     " not divisible by window " + std::to_string(w));
    }
};

// Owns parameters; registration order is the checkpoint order.
template <typename T>
class ParamStore {
public:
    Parameter<T>* add(const std::string& name, Tensor<T> init) {
        params_.push_back(std::make_unique<Parameter<T>>(name, std::move(init)));
        return params_.back().get();
    }
    std::vector<Parameter<T>*> all() const {
        std::vector<Parameter<T>*> v;
        v.reserve(params_.size());
        for (const auto& p : params_) v.push_back(p.get());
        return v;
    }

private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
};

template <typename T>
struct LinearP {
    Parameter<T>* w = nullptr;  // (in, out)
    Parameter<T>* b = nullptr;  // (out)
};

template <typename T>
struct ConvP {
    Parameter<T>* w = nullptr;  // (kh, kw, cin, cout)
    Parameter<T>* b = nullptr;
    i64 stride = 1, pad = 0;
};

template <typename T>
struct LayerNormP {
    Parameter<T>* gamma = nullptr;
    Parameter<T>* beta = nullptr;
};

template <typename T>
struct DepthwiseP {
    Parameter<T>* w = nullptr;  // (3, 3, c)
    Parameter<T>* b = nullptr;
};

// fan-in scaled uniform init for weights, zeros for biases
template <typename T>
LinearP<T> init_linear(ParamStore<T>& s, const std::string& name, i64 in, i64 out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    return {s.add(name + ".w", Tensor<T>::uniform({in, out}, rng, -bound, bound)),
            s.add(name + ".b", Tensor<T>({out}))};
}

template <typename T>
ConvP<T> init_conv(ParamStore<T>& s, const std::string& name, i64 kh, i64 kw, i64 cin, i64 cout,
                   i64 stride, i64 pad, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(kh * kw * cin));
    return {s.add(name + ".w", Tensor<T>::uniform({kh, kw, cin, cout}, rng, -bound, bound)),
            s.add(name + ".b", Tensor<T>({cout})), stride, pad};
}

template <typename T>
DepthwiseP<T> init_depthwise(ParamStore<T>& s, const std::string& name, i64 c, Rng& rng) {
    const double bound = 1.0 / 3.0;  // fan-in 9
    return {s.add(name + ".w", Tensor<T>::uniform({3, 3, c}, rng, -bound, bound)),
            s.add(name + ".b", Tensor<T>({c}))};
}

template <typename T>
LayerNormP<T> init_layernorm(ParamStore<T>& s, const std::string& name, i64 dim) {
    return {s.add(name + ".gamma", Tensor<T>::ones({dim})), s.add(name + ".beta", Tensor<T>({dim}))};
}

template <typename T>
NodePtr<T> linear_2d(NodePtr<T> x, const LinearP<T>& p) {
    return add(matmul(x, p.w->node), p.b->node);
}

// (H,W,Cin) -> (H,W,Cout) via flattened matmul on tokens
template <typename T>
NodePtr<T> linear_tokens(NodePtr<T> grid, const LinearP<T>& p) {
    const i64 H = grid->value.dim(0), W = grid->value.dim(1);
    auto flat = reshape(grid, {H * W, grid->value.dim(2)});
    auto y = linear_2d(flat, p);
    return reshape(y, {H, W, y->value.dim(1)});
}

template <typename T>
NodePtr<T> conv(NodePtr<T> x, const ConvP<T>& p) {
    return conv2d(x, p.w->node, p.b->node, p.stride, p.pad);
}

// patch-size conv with the exact-divisibility contract
template <typename T>
NodePtr<T> patch_embed(NodePtr<T> image, const ConvP<T>& p) {
    const i64 patch = p.stride;
    require(image->value.dim(0) % patch == 0 && image->value.dim(1) % patch == 0, "patch_embed",
            "image " + shape_str(image->value.shape()) + " not divisible by patch " +
                std::to_string(patch));
    return conv(image, p);
}

template <typename T>
NodePtr<T> norm_tokens(NodePtr<T> grid, const LayerNormP<T>& p) {
    return layernorm(grid, p.gamma->node, p.beta->node);
}

// ---------------------------------------------------------------------------
// windowed multi-head cross attention

template <typename T>
struct McaParams {
    LinearP<T> q, k, v, o;
    LinearP<T> gate_hidden, gate_out;  // shared 2-layer MLP (absent when gate disabled)
    bool has_gate = false;
};

template <typename T>
McaParams<T> init_mca(ParamStore<T>& s, const std::string& name, const NetConfig& cfg, Rng& rng) {
    McaParams<T> p;
    const i64 D = cfg.embed_dim;
    p.q = init_linear(s, name + ".q", D, D, rng);
    p.k = init_linear(s, name + ".k", D, D, rng);
    p.v = init_linear(s, name + ".v", D, D, rng);
    p.o = init_linear(s, name + ".o", D, D, rng);
    if (cfg.dynamic_gate && cfg.window_sizes.size() > 1) {
        const i64 cg = D / static_cast<i64>(cfg.window_sizes.size());
        p.gate_hidden = init_linear(s, name + ".gate_hidden", cg, cg, rng);
        p.gate_out = init_linear(s, name + ".gate_out", cg, 1, rng);
        p.has_gate = true;
    }
    return p;
}

// Swin-style additive mask forbidding attention across the wrap-around seam of
// a cyclic shift. Returned per window as 0 / -1e30, repeated per head.
template <typename T>
Tensor<T> shift_attn_mask(i64 H, i64 W, i64 win, i64 shift, i64 heads_per_branch) {
    auto region = [&](i64 coord, i64 size) {
        if (coord < size - win) return 0;
        if (coord < size - shift) return 1;
        return 2;
    };
    std::vector<int> id(static_cast<size_t>(H * W));
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x) {
            const i64 ry = (y + shift) % H, rx = (x + shift) % W;  // after roll(-shift)
            id[static_cast<size_t>(y * W + x)] = region(ry, H) * 3 + region(rx, W);
        }
    const i64 nh = H / win, nw = W / win, nwin = nh * nw, tokens = win * win;
    Tensor<T> mask({nwin * heads_per_branch, tokens, tokens});
    for (i64 b = 0; b < nwin; ++b) {
        const i64 by = b / nw, bx = b % nw;
        for (i64 i = 0; i < tokens; ++i)
            for (i64 j = 0; j < tokens; ++j) {
                const i64 yi = by * win + i / win, xi = bx * win + i % win;
                const i64 yj = by * win + j / win, xj = bx * win + j % win;
                const bool ok = id[static_cast<size_t>(yi * W + xi)] ==
                                id[static_cast<size_t>(yj * W + xj)];
                for (i64 h = 0; h < heads_per_branch; ++h)
                    mask[((b * heads_per_branch + h) * tokens + i) * tokens + j] =
                        ok ? T(0) : T(-1e30);
            }
    }
    return mask;
}

// Collects post-softmax attention maps (and the masks applied) for inspection.
template <typename T>
struct AttnTrace {
    std::vector<Tensor<T>> attn;
    std::vector<Tensor<T>> masks;  // empty tensors where no mask was applied
};

// Cross attention: query from the prior tokens, key/value from the image
// tokens. Heads split evenly across window sizes; each size-branch attends in
// its own non-overlapping (optionally shifted) windows, branch outputs are
// reweighted by the dynamic gate, concatenated over channels and projected.
template <typename T>
NodePtr<T> mca_forward(NodePtr<T> q_tokens, NodePtr<T> kv_tokens, const McaParams<T>& p,
                       const NetConfig& cfg, bool shifted, AttnTrace<T>* trace = nullptr) {
    const i64 H = q_tokens->value.dim(0), W = q_tokens->value.dim(1), D = cfg.embed_dim;
    require(kv_tokens->value.dim(0) == H && kv_tokens->value.dim(1) == W &&
                q_tokens->value.dim(2) == D && kv_tokens->value.dim(2) == D,
            "mca", "token grids must agree: " + shape_str(q_tokens->value.shape()) + " vs " +
                       shape_str(kv_tokens->value.shape()));
    const i64 nb = static_cast<i64>(cfg.window_sizes.size());
    const i64 heads_per = cfg.heads / nb;
    const i64 hd = D / cfg.heads;
    const i64 cg = D / nb;  // channels per size-branch

    auto q_all = reshape(linear_tokens(q_tokens, p.q), {H, W, D});
    auto k_all = reshape(linear_tokens(kv_tokens, p.k), {H, W, D});
    auto v_all = reshape(linear_tokens(kv_tokens, p.v), {H, W, D});

    std::vector<NodePtr<T>> branch_outs;
    for (i64 b = 0; b < nb; ++b) {
        const i64 win = cfg.window_sizes[static_cast<size_t>(b)];
        const i64 shift = shifted ? win / 2 : 0;
        auto qb = slice(q_all, 2, b * cg, cg);
        auto kb = slice(k_all, 2, b * cg, cg);
        auto vb = slice(v_all, 2, b * cg, cg);
        if (shift > 0) {
            qb = roll2d(qb, -shift, -shift);
            kb = roll2d(kb, -shift, -shift);
            vb = roll2d(vb, -shift, -shift);
        }
        const i64 nwin = (H / win) * (W / win), tokens = win * win;
        auto split_heads = [&](NodePtr<T> g) {
            auto wp = window_partition(g, win);                       // (nwin, tokens, cg)
            auto r = reshape(wp, {nwin, tokens, heads_per, hd});
            return reshape(transpose(r, {0, 2, 1, 3}), {nwin * heads_per, tokens, hd});
        };
        auto qh = split_heads(qb);
        auto kh = split_heads(kb);
        auto vh = split_heads(vb);
        auto logits = scale(bmm(qh, transpose(kh, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(hd)));
        Tensor<T> mask_used;
        if (shift > 0) {
            Tensor<T> mask = shift_attn_mask<T>(H, W, win, shift, heads_per);
            logits = add(logits, constant(mask));
            mask_used = mask;
        }
        auto attn = softmax(logits);
        if (trace) {
            trace->attn.push_back(attn->value);
            trace->masks.push_back(mask_used);
        }
        auto ctx = bmm(attn, vh);                                     // (nwin*heads, tokens, hd)
        auto r = reshape(ctx, {nwin, heads_per, tokens, hd});
        auto merged = reshape(transpose(r, {0, 2, 1, 3}), {nwin, tokens, cg});
        auto out = window_reverse(merged, win, H, W);
        if (shift > 0) out = roll2d(out, shift, shift);
        branch_outs.push_back(out);
    }

    if (p.has_gate) {
        std::vector<NodePtr<T>> logits;
        for (auto& out : branch_outs) {
            auto pooled = reshape(global_avg_pool(out), {1, cg});
            logits.push_back(linear_2d(gelu(linear_2d(pooled, p.gate_hidden)), p.gate_out));
        }
        auto weights = softmax(concat(logits, 1));  // (1, nb)
        for (i64 b = 0; b < nb; ++b) {
            auto wb = reshape(slice(weights, 1, b, 1), {1});
            branch_outs[static_cast<size_t>(b)] = mul(branch_outs[static_cast<size_t>(b)], wb);
        }
    }

    auto cat = nb == 1 ? branch_outs[0] : concat(branch_outs, 2);
    return linear_tokens(cat, p.o);
}

// ---------------------------------------------------------------------------
// locally-enhanced feed-forward

template <typename T>
struct LeffParams {
    LinearP<T> expand;     // D -> 4D
    DepthwiseP<T> spatial; // 3x3 depthwise on the grid
    LinearP<T> project;    // 4D -> D
};

template <typename T>
LeffParams<T> init_leff(ParamStore<T>& s, const std::string& name, i64 dim, Rng& rng) {
    return {init_linear(s, name + ".expand", dim, 4 * dim, rng),
            init_depthwise(s, name + ".spatial", 4 * dim, rng),
            init_linear(s, name + ".project", 4 * dim, dim, rng)};
}

template <typename T>
NodePtr<T> leff_forward(NodePtr<T> tokens, const LeffParams<T>& p) {
    const i64 H = tokens->value.dim(0), W = tokens->value.dim(1);
    auto x = gelu(linear_tokens(tokens, p.expand));
    x = gelu(depthwise_conv2d(x, p.spatial.w->node, p.spatial.b->node));
    return reshape(linear_tokens(x, p.project), {H, W, tokens->value.dim(2)});
}

// ---------------------------------------------------------------------------
// prior-guided refinement module

template <typename T>
struct PgrmParams {
    ConvP<T> prior_channel;  // 1x1, 2->3, graphic prior only
    bool has_prior_channel = false;
    ConvP<T> embed_image, embed_prior;  // patch-size conv, stride = patch
    LayerNormP<T> ln_q1, ln_kv1, ln_f1, ln_q2, ln_kv2, ln_f2;
    McaParams<T> mca_plain, mca_shifted;
    LeffParams<T> leff1, leff2;
    ConvP<T> tail_mix, tail_out;  // 3x3 D->D, 3x3 D->3*patch^2
};

// prior_channels: 1 = mask (replicated), 2 = graphic (1x1 conv), 3 = stacked
template <typename T>
PgrmParams<T> init_pgrm(ParamStore<T>& s, const std::string& name, const NetConfig& cfg,
                        i64 prior_channels, Rng& rng) {
    PgrmParams<T> p;
    const i64 D = cfg.embed_dim, ps = cfg.patch;
    if (prior_channels == 2) {
        p.prior_channel = init_conv(s, name + ".prior_channel", 1, 1, 2, 3, 1, 0, rng);
        p.has_prior_channel = true;
    }
    p.embed_image = init_conv(s, name + ".embed_image", ps, ps, 3, D, ps, 0, rng);
    p.embed_prior = init_conv(s, name + ".embed_prior", ps, ps, 3, D, ps, 0, rng);
    p.ln_q1 = init_layernorm(s, name + ".ln_q1", D);
    p.ln_kv1 = init_layernorm(s, name + ".ln_kv1", D);
    p.ln_f1 = init_layernorm(s, name + ".ln_f1", D);
    p.ln_q2 = init_layernorm(s, name + ".ln_q2", D);
    p.ln_kv2 = init_layernorm(s, name + ".ln_kv2", D);
    p.ln_f2 = init_layernorm(s, name + ".ln_f2", D);
    p.mca_plain = init_mca(s, name + ".mca_plain", cfg, rng);
    p.mca_shifted = init_mca(s, name + ".mca_shifted", cfg, rng);
    p.leff1 = init_leff(s, name + ".leff1", D, rng);
    p.leff2 = init_leff(s, name + ".leff2", D, rng);
    p.tail_mix = init_conv(s, name + ".tail_mix", 3, 3, D, D, 1, 1, rng);
    p.tail_out = init_conv(s, name + ".tail_out", 3, 3, D, 3 * ps * ps, 1, 1, rng);
    return p;
}

// Expands a 1/2/3-channel prior image to 3 channels.
template <typename T>
NodePtr<T> expand_prior(NodePtr<T> prior, const PgrmParams<T>& p) {
    const i64 c = prior->value.dim(2);
    if (c == 1) return concat<T>({prior, prior, prior}, 2);
    if (c == 2) {
        require(p.has_prior_channel, "pgrm", "2-channel prior needs the channel transform");
        return conv(prior, p.prior_channel);
    }
    require(c == 3, "pgrm", "prior must have 1, 2 or 3 channels, got " +
                                shape_str(prior->value.shape()));
    return prior;
}

// One refinement step: embed image and prior, two attention stages (plain then
// shifted windows) each followed by the locally-enhanced feed-forward, a two
// conv tail and pixel shuffle back to image resolution.
template <typename T>
NodePtr<T> pgrm_forward(NodePtr<T> image, NodePtr<T> prior, const PgrmParams<T>& p,
                        const NetConfig& cfg, AttnTrace<T>* trace = nullptr) {
    require(image->value.rank() == 3 && image->value.dim(2) == 3, "pgrm",
            "image must be HxWx3, got " + shape_str(image->value.shape()));
    auto prior3 = expand_prior(prior, p);
    auto img_tok = patch_embed(image, p.embed_image);
    auto prior_tok = patch_embed(prior3, p.embed_prior);

    auto kv1 = norm_tokens(img_tok, p.ln_kv1);
    auto a1 = mca_forward(norm_tokens(prior_tok, p.ln_q1), kv1, p.mca_plain, cfg, false, trace);
    auto x = add(a1, kv1);
    x = add(x, leff_forward(norm_tokens(x, p.ln_f1), p.leff1));

    auto kv2 = norm_tokens(x, p.ln_kv2);
    auto a2 = mca_forward(norm_tokens(prior_tok, p.ln_q2), kv2, p.mca_shifted, cfg, true, trace);
    auto y = add(a2, kv2);
    y = add(y, leff_forward(norm_tokens(y, p.ln_f2), p.leff2));

    auto t = gelu(conv(y, p.tail_mix));
    return sigmoid(pixel_shuffle(conv(t, p.tail_out), cfg.patch));
}

// ---------------------------------------------------------------------------
// complementation modulation module

enum class CmmVariant { full, no_ca, unet_like, tsrn_like };

inline const char* cmm_variant_name(CmmVariant v) {
    switch (v) {
        case CmmVariant::full: return "full";
        case CmmVariant::no_ca: return "no_ca";
        case CmmVariant::unet_like: return "unet_like";
        default: return "tsrn_like";
    }
}

inline CmmVariant cmm_variant_from(const std::string& s) {
    if (s == "full") return CmmVariant::full;
    if (s == "no_ca") return CmmVariant::no_ca;
    if (s == "unet_like") return CmmVariant::unet_like;
    if (s == "tsrn_like") return CmmVariant::tsrn_like;
    throw ConfigError("unknown cmm variant: " + s);
}

template <typename T>
struct CmmParams {
    CmmVariant variant = CmmVariant::full;
    std::vector<ConvP<T>> encoder_a, encoder_b;  // six convs each (not shared)
    LinearP<T> ca_squeeze, ca_expand;            // 128 -> 32 -> 128
    std::vector<ConvP<T>> decoder;               // six convs, upsample between stages
    ConvP<T> decoder_out;                        // -> 3
    // tsrn_like
    ConvP<T> t_in, t_r1a, t_r1b, t_r2a, t_r2b, t_out;
};

inline constexpr i64 kCmmEncChannels[7] = {3, 16, 16, 32, 32, 64, 64};
inline constexpr i64 kCmmEncStride[6] = {1, 2, 1, 2, 1, 1};

template <typename T>
CmmParams<T> init_cmm(ParamStore<T>& s, const std::string& name, CmmVariant variant, Rng& rng) {
    CmmParams<T> p;
    p.variant = variant;
    if (variant == CmmVariant::tsrn_like) {
        p.t_in = init_conv(s, name + ".in", 3, 3, 6, 32, 1, 1, rng);
        p.t_r1a = init_conv(s, name + ".r1a", 3, 3, 32, 32, 1, 1, rng);
        p.t_r1b = init_conv(s, name + ".r1b", 3, 3, 32, 32, 1, 1, rng);
        p.t_r2a = init_conv(s, name + ".r2a", 3, 3, 32, 32, 1, 1, rng);
        p.t_r2b = init_conv(s, name + ".r2b", 3, 3, 32, 32, 1, 1, rng);
        p.t_out = init_conv(s, name + ".out", 3, 3, 32, 3, 1, 1, rng);
        return p;
    }
    for (int e = 0; e < 2; ++e) {
        auto& enc = e == 0 ? p.encoder_a : p.encoder_b;
        const std::string base = name + (e == 0 ? ".enc_a" : ".enc_b");
        for (int i = 0; i < 6; ++i)
            enc.push_back(init_conv(s, base + ".c" + std::to_string(i), 3, 3, kCmmEncChannels[i],
                                    kCmmEncChannels[i + 1], kCmmEncStride[i], 1, rng));
    }
    if (variant == CmmVariant::full) {
        p.ca_squeeze = init_linear(s, name + ".ca_squeeze", 128, 32, rng);
        p.ca_expand = init_linear(s, name + ".ca_expand", 32, 128, rng);
    }
    const bool unet = variant == CmmVariant::unet_like;
    // decoder mirrors the encoder; skip concats double the input channels
    const i64 dec_in[6] = {128, 64, unet ? 64 + 64 : 64, 32, unet ? 32 + 32 : 32, 16};
    const i64 dec_out[6] = {64, 64, 32, 32, 16, 16};
    for (int i = 0; i < 6; ++i)
        p.decoder.push_back(
            init_conv(s, name + ".dec.c" + std::to_string(i), 3, 3, dec_in[i], dec_out[i], 1, 1, rng));
    p.decoder_out = init_conv(s, name + ".dec.out", 3, 3, 16, 3, 1, 1, rng);
    return p;
}

template <typename T>
struct CmmEncoded {
    NodePtr<T> bottleneck;                 // after conv 6
    NodePtr<T> mid, top;                   // skip features (unet variant)
};

template <typename T>
CmmEncoded<T> cmm_encode(NodePtr<T> image, const std::vector<ConvP<T>>& enc) {
    CmmEncoded<T> out;
    auto x = image;
    for (size_t i = 0; i < enc.size(); ++i) {
        x = gelu(conv(x, enc[i]));
        if (i == 0) out.top = x;   // full res, 16ch
        if (i == 2) out.mid = x;   // half res, 32ch
    }
    out.bottleneck = x;
    return out;
}

// pool -> squeeze -> expand -> sigmoid, one weight per channel slice
template <typename T>
NodePtr<T> cmm_channel_attention(NodePtr<T> fm, const CmmParams<T>& p) {
    auto pooled = reshape(global_avg_pool(fm), {1, fm->value.dim(2)});
    auto h = gelu(linear_2d(pooled, p.ca_squeeze));
    return reshape(sigmoid(linear_2d(h, p.ca_expand)), {fm->value.dim(2)});
}

// CA(F) (x) F + F; with attention forced to zero this is exactly F.
template <typename T>
NodePtr<T> cmm_modulate(NodePtr<T> fm, NodePtr<T> ca) {
    return add(mul(fm, ca), fm);
}

template <typename T>
NodePtr<T> cmm_decode(NodePtr<T> x, const CmmParams<T>& p, NodePtr<T> mid, NodePtr<T> top) {
    const bool unet = p.variant == CmmVariant::unet_like;
    x = gelu(conv(x, p.decoder[0]));
    x = gelu(conv(x, p.decoder[1]));
    x = upsample_nearest2x(x);
    if (unet) x = concat<T>({x, mid}, 2);
    x = gelu(conv(x, p.decoder[2]));
    x = gelu(conv(x, p.decoder[3]));
    x = upsample_nearest2x(x);
    if (unet) x = concat<T>({x, top}, 2);
    x = gelu(conv(x, p.decoder[4]));
    x = gelu(conv(x, p.decoder[5]));
    return sigmoid(conv(x, p.decoder_out));
}

// Fuses the two refined images. Encoders are separate, so the output is not
// symmetric in its arguments.
template <typename T>
NodePtr<T> cmm_forward(NodePtr<T> image_a, NodePtr<T> image_b, const CmmParams<T>& p) {
    require(image_a->value.same_shape(image_b->value), "cmm",
            shape_str(image_a->value.shape()) + " vs " + shape_str(image_b->value.shape()));
    if (p.variant == CmmVariant::tsrn_like) {
        auto x = gelu(conv(concat<T>({image_a, image_b}, 2), p.t_in));
        x = add(x, conv(gelu(conv(x, p.t_r1a)), p.t_r1b));
        x = add(x, conv(gelu(conv(x, p.t_r2a)), p.t_r2b));
        return sigmoid(conv(x, p.t_out));
    }
    auto ea = cmm_encode(image_a, p.encoder_a);
    auto eb = cmm_encode(image_b, p.encoder_b);
    auto fm = concat<T>({ea.bottleneck, eb.bottleneck}, 2);  // 128 channels
    NodePtr<T> modulated = fm;
    if (p.variant == CmmVariant::full) modulated = cmm_modulate(fm, cmm_channel_attention(fm, p));
    NodePtr<T> mid, top;
    if (p.variant == CmmVariant::unet_like) {
        mid = concat<T>({ea.mid, eb.mid}, 2);
        top = concat<T>({ea.top, eb.top}, 2);
    }
    return cmm_decode(modulated, p, mid, top);
}

// ---------------------------------------------------------------------------
// small baseline SR network (frozen during refinement training)

template <typename T>
struct TinyPsnParams {
    ConvP<T> head, r1a, r1b, r2a, r2b, tail;
};

template <typename T>
TinyPsnParams<T> init_tiny_psn(ParamStore<T>& s, const std::string& name, Rng& rng) {
    TinyPsnParams<T> p;
    p.head = init_conv(s, name + ".head", 3, 3, 3, 32, 1, 1, rng);
    p.r1a = init_conv(s, name + ".r1a", 3, 3, 32, 32, 1, 1, rng);
    p.r1b = init_conv(s, name + ".r1b", 3, 3, 32, 32, 1, 1, rng);
    p.r2a = init_conv(s, name + ".r2a", 3, 3, 32, 32, 1, 1, rng);
    p.r2b = init_conv(s, name + ".r2b", 3, 3, 32, 32, 1, 1, rng);
    p.tail = init_conv(s, name + ".tail", 3, 3, 32, 12, 1, 1, rng);
    return p;
}

template <typename T>
NodePtr<T> tiny_psn_forward(NodePtr<T> lr, const TinyPsnParams<T>& p) {
    auto x = gelu(conv(lr, p.head));
    x = add(x, conv(gelu(conv(x, p.r1a)), p.r1b));
    x = add(x, conv(gelu(conv(x, p.r2a)), p.r2b));
    return sigmoid(pixel_shuffle(conv(x, p.tail), 2));
}

}  // namespace dpmn::net
