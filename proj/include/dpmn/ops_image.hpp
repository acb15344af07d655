#pragma once

#include "dpmn/ops.hpp"

// Spatial ops on H x W x C tensors: convolutions, pixel shuffle, pooling,
// cyclic shifts, window partitioning and the forward-difference image gradient.

namespace dpmn {

// x: (H,W,Cin), w: (KH,KW,Cin,Cout), b: (Cout) or null
template <typename T>
NodePtr<T> conv2d(NodePtr<T> x, NodePtr<T> w, NodePtr<T> b, i64 stride, i64 pad) {
    require(x->value.rank() == 3 && w->value.rank() == 4, "conv2d",
            "image " + shape_str(x->value.shape()) + ", kernel " + shape_str(w->value.shape()));
    require(x->value.dim(2) == w->value.dim(2), "conv2d",
            "channel mismatch " + shape_str(x->value.shape()) + " vs " +
                shape_str(w->value.shape()));
    require(stride == 1 || stride == 2, "conv2d", "stride must be 1 or 2");
    const ConvGeom g = conv_geom(x->value.dim(0), x->value.dim(1), x->value.dim(2),
                                 w->value.dim(0), w->value.dim(1), w->value.dim(3), stride, pad);
    require(g.oh > 0 && g.ow > 0, "conv2d", "empty output for " + shape_str(x->value.shape()));
    const i64 P = g.out_positions(), K = g.patch_len(), Cout = g.cout;

    Tensor<T> col({P, K});
    im2col(x->value.data(), g, col.data());
    Tensor<T> out({g.oh, g.ow, Cout});
    mm_acc(col.data(), w->value.data(), out.data(), P, K, Cout);
    if (b) {
        require(b->value.numel() == Cout, "conv2d", "bias size");
        const T* bd = b->value.data();
        T* od = out.data();
        for (i64 p = 0; p < P; ++p)
            for (i64 c = 0; c < Cout; ++c) od[p * Cout + c] += bd[c];
    }
    std::vector<NodePtr<T>> parents = {x, w};
    if (b) parents.push_back(b);
    return make_op<T>("conv2d", std::move(out), std::move(parents), [g, P, K, Cout, col](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const T* gd = self.grad.data();
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            T* db = self.parents[2]->ensure_grad().data();
            for (i64 p = 0; p < P; ++p)
                for (i64 c = 0; c < Cout; ++c) db[c] += gd[p * Cout + c];
        }
        if (pw.requires_grad)
            mm_tn_acc(col.data(), gd, pw.ensure_grad().data(), P, K, Cout);
        if (px.requires_grad) {
            Tensor<T> dcol({P, K});
            mm_nt_acc(gd, pw.value.data(), dcol.data(), P, Cout, K);
            col2im_acc(dcol.data(), g, px.ensure_grad().data());
        }
    });
}

// 3x3 depthwise, stride 1, pad 1. x: (H,W,C), w: (3,3,C), b: (C)
template <typename T>
NodePtr<T> depthwise_conv2d(NodePtr<T> x, NodePtr<T> w, NodePtr<T> b) {
    require(x->value.rank() == 3 && w->value.rank() == 3 && w->value.dim(0) == 3 &&
                w->value.dim(1) == 3 && w->value.dim(2) == x->value.dim(2),
            "depthwise_conv2d",
            "image " + shape_str(x->value.shape()) + ", kernel " + shape_str(w->value.shape()));
    const i64 H = x->value.dim(0), W = x->value.dim(1), C = x->value.dim(2);
    Tensor<T> out({H, W, C});
    const T* xd = x->value.data();
    const T* wd = w->value.data();
    const T* bd = b ? b->value.data() : nullptr;
    T* od = out.data();
    parallel_for(H, [=](i64 y0, i64 y1) {
        for (i64 y = y0; y < y1; ++y)
            for (i64 xx = 0; xx < W; ++xx) {
                T* o = od + (y * W + xx) * C;
                for (i64 c = 0; c < C; ++c) o[c] = bd ? bd[c] : T(0);
                for (i64 ky = 0; ky < 3; ++ky) {
                    const i64 sy = y + ky - 1;
                    if (sy < 0 || sy >= H) continue;
                    for (i64 kx = 0; kx < 3; ++kx) {
                        const i64 sx = xx + kx - 1;
                        if (sx < 0 || sx >= W) continue;
                        const T* s = xd + (sy * W + sx) * C;
                        const T* wk = wd + (ky * 3 + kx) * C;
                        for (i64 c = 0; c < C; ++c) o[c] += wk[c] * s[c];
                    }
                }
            }
    }, 2);
    std::vector<NodePtr<T>> parents = {x, w};
    if (b) parents.push_back(b);
    return make_op<T>("depthwise_conv2d", std::move(out), std::move(parents), [H, W, C](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const T* gd = self.grad.data();
        const T* xd2 = px.value.data();
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            T* db = self.parents[2]->ensure_grad().data();
            for (i64 p = 0; p < H * W; ++p)
                for (i64 c = 0; c < C; ++c) db[c] += gd[p * C + c];
        }
        if (pw.requires_grad) {
            T* dw = pw.ensure_grad().data();
            for (i64 ky = 0; ky < 3; ++ky)
                for (i64 kx = 0; kx < 3; ++kx) {
                    T* wk = dw + (ky * 3 + kx) * C;
                    for (i64 y = 0; y < H; ++y) {
                        const i64 sy = y + ky - 1;
                        if (sy < 0 || sy >= H) continue;
                        for (i64 xx = 0; xx < W; ++xx) {
                            const i64 sx = xx + kx - 1;
                            if (sx < 0 || sx >= W) continue;
                            const T* g = gd + (y * W + xx) * C;
                            const T* s = xd2 + (sy * W + sx) * C;
                            for (i64 c = 0; c < C; ++c) wk[c] += g[c] * s[c];
                        }
                    }
                }
        }
        if (px.requires_grad) {
            T* dx = px.ensure_grad().data();
            const T* wd2 = pw.value.data();
            parallel_for(H, [=](i64 y0, i64 y1) {
                for (i64 y = y0; y < y1; ++y)
                    for (i64 xx = 0; xx < W; ++xx) {
                        T* d = dx + (y * W + xx) * C;
                        for (i64 ky = 0; ky < 3; ++ky) {
                            const i64 oy = y - (ky - 1);
                            if (oy < 0 || oy >= H) continue;
                            for (i64 kx = 0; kx < 3; ++kx) {
                                const i64 ox = xx - (kx - 1);
                                if (ox < 0 || ox >= W) continue;
                                const T* g = gd + (oy * W + ox) * C;
                                const T* wk = wd2 + (ky * 3 + kx) * C;
                                for (i64 c = 0; c < C; ++c) d[c] += wk[c] * g[c];
                            }
                        }
                    }
            }, 2);
        }
    });
}

namespace detail {

// out(y*r+dy, x*r+dx, c) = in(y, x, c*r*r + dy*r + dx)
template <typename T>
Tensor<T> shuffle_fwd(const Tensor<T>& in, i64 r) {
    const i64 H = in.dim(0), W = in.dim(1), C = in.dim(2) / (r * r);
    Tensor<T> out({H * r, W * r, C});
    const T* id = in.data();
    T* od = out.data();
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
            for (i64 c = 0; c < C; ++c)
                for (i64 dy = 0; dy < r; ++dy)
                    for (i64 dx = 0; dx < r; ++dx)
                        od[((y * r + dy) * W * r + (x * r + dx)) * C + c] =
                            id[(y * W + x) * (C * r * r) + c * r * r + dy * r + dx];
    return out;
}

template <typename T>
Tensor<T> shuffle_inv(const Tensor<T>& in, i64 r) {
    const i64 H = in.dim(0) / r, W = in.dim(1) / r, C = in.dim(2);
    Tensor<T> out({H, W, C * r * r});
    const T* id = in.data();
    T* od = out.data();
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
            for (i64 c = 0; c < C; ++c)
                for (i64 dy = 0; dy < r; ++dy)
                    for (i64 dx = 0; dx < r; ++dx)
                        od[(y * W + x) * (C * r * r) + c * r * r + dy * r + dx] =
                            id[((y * r + dy) * W * r + (x * r + dx)) * C + c];
    return out;
}

}  // namespace detail

template <typename T>
NodePtr<T> pixel_shuffle(NodePtr<T> a, i64 r) {
    require(a->value.rank() == 3 && a->value.dim(2) % (r * r) == 0, "pixel_shuffle",
            "channels of " + shape_str(a->value.shape()) + " not divisible by r^2");
    return make_op<T>("pixel_shuffle", detail::shuffle_fwd(a->value, r), {a}, [r](Node<T>& self) {
        acc_grad(*self.parents[0], detail::shuffle_inv(self.grad, r));
    });
}

template <typename T>
NodePtr<T> pixel_unshuffle(NodePtr<T> a, i64 r) {
    require(a->value.rank() == 3 && a->value.dim(0) % r == 0 && a->value.dim(1) % r == 0,
            "pixel_unshuffle", "spatial dims of " + shape_str(a->value.shape()) +
                                   " not divisible by r=" + std::to_string(r));
    return make_op<T>("pixel_unshuffle", detail::shuffle_inv(a->value, r), {a}, [r](Node<T>& self) {
        acc_grad(*self.parents[0], detail::shuffle_fwd(self.grad, r));
    });
}

// (H,W,C) -> (C)
template <typename T>
NodePtr<T> global_avg_pool(NodePtr<T> a) {
    require(a->value.rank() == 3, "global_avg_pool", shape_str(a->value.shape()));
    const i64 H = a->value.dim(0), W = a->value.dim(1), C = a->value.dim(2);
    Tensor<T> out({C});
    const T* ad = a->value.data();
    for (i64 p = 0; p < H * W; ++p)
        for (i64 c = 0; c < C; ++c) out[c] += ad[p * C + c];
    const T inv = T(1) / static_cast<T>(H * W);
    for (i64 c = 0; c < C; ++c) out[c] *= inv;
    return make_op<T>("global_avg_pool", std::move(out), {a}, [H, W, C, inv](Node<T>& self) {
        T* da = self.parents[0]->ensure_grad().data();
        const T* gd = self.grad.data();
        for (i64 p = 0; p < H * W; ++p)
            for (i64 c = 0; c < C; ++c) da[p * C + c] += gd[c] * inv;
    });
}

template <typename T>
NodePtr<T> upsample_nearest2x(NodePtr<T> a) {
    require(a->value.rank() == 3, "upsample_nearest2x", shape_str(a->value.shape()));
    const i64 H = a->value.dim(0), W = a->value.dim(1), C = a->value.dim(2);
    Tensor<T> out({H * 2, W * 2, C});
    const T* ad = a->value.data();
    T* od = out.data();
    for (i64 y = 0; y < 2 * H; ++y)
        for (i64 x = 0; x < 2 * W; ++x) {
            const T* s = ad + ((y / 2) * W + x / 2) * C;
            T* d = od + (y * 2 * W + x) * C;
            for (i64 c = 0; c < C; ++c) d[c] = s[c];
        }
    return make_op<T>("upsample_nearest2x", std::move(out), {a}, [H, W, C](Node<T>& self) {
        T* da = self.parents[0]->ensure_grad().data();
        const T* gd = self.grad.data();
        for (i64 y = 0; y < 2 * H; ++y)
            for (i64 x = 0; x < 2 * W; ++x) {
                const T* g = gd + (y * 2 * W + x) * C;
                T* d = da + ((y / 2) * W + x / 2) * C;
                for (i64 c = 0; c < C; ++c) d[c] += g[c];
            }
    });
}

namespace detail {

template <typename T>
Tensor<T> roll_tensor(const Tensor<T>& in, i64 dy, i64 dx) {
    const i64 H = in.dim(0), W = in.dim(1), C = in.dim(2);
    const i64 sy = ((dy % H) + H) % H, sx = ((dx % W) + W) % W;
    Tensor<T> out(in.shape());
    const T* id = in.data();
    T* od = out.data();
    for (i64 y = 0; y < H; ++y) {
        const i64 ty = (y + sy) % H;
        for (i64 x = 0; x < W; ++x) {
            const i64 tx = (x + sx) % W;
            const T* s = id + (y * W + x) * C;
            T* d = od + (ty * W + tx) * C;
            for (i64 c = 0; c < C; ++c) d[c] = s[c];
        }
    }
    return out;
}

}  // namespace detail

// cyclic shift: out(y+dy mod H, x+dx mod W) = in(y, x)
template <typename T>
NodePtr<T> roll2d(NodePtr<T> a, i64 dy, i64 dx) {
    require(a->value.rank() == 3, "roll2d", shape_str(a->value.shape()));
    return make_op<T>("roll2d", detail::roll_tensor(a->value, dy, dx), {a}, [dy, dx](Node<T>& self) {
        acc_grad(*self.parents[0], detail::roll_tensor(self.grad, -dy, -dx));
    });
}

namespace detail {

template <typename T>
Tensor<T> window_split(const Tensor<T>& in, i64 win) {
    const i64 H = in.dim(0), W = in.dim(1), C = in.dim(2);
    const i64 nh = H / win, nw = W / win;
    Tensor<T> out({nh * nw, win * win, C});
    const T* id = in.data();
    T* od = out.data();
    for (i64 by = 0; by < nh; ++by)
        for (i64 bx = 0; bx < nw; ++bx)
            for (i64 iy = 0; iy < win; ++iy)
                for (i64 ix = 0; ix < win; ++ix) {
                    const T* s = id + ((by * win + iy) * W + bx * win + ix) * C;
                    T* d = od + ((by * nw + bx) * win * win + iy * win + ix) * C;
                    for (i64 c = 0; c < C; ++c) d[c] = s[c];
                }
    return out;
}

template <typename T>
Tensor<T> window_merge(const Tensor<T>& in, i64 win, i64 H, i64 W) {
    const i64 C = in.dim(2);
    const i64 nw = W / win;
    Tensor<T> out({H, W, C});
    const T* id = in.data();
    T* od = out.data();
    for (i64 b = 0; b < in.dim(0); ++b) {
        const i64 by = b / nw, bx = b % nw;
        for (i64 iy = 0; iy < win; ++iy)
            for (i64 ix = 0; ix < win; ++ix) {
                const T* s = id + (b * win * win + iy * win + ix) * C;
                T* d = od + ((by * win + iy) * W + bx * win + ix) * C;
                for (i64 c = 0; c < C; ++c) d[c] = s[c];
            }
    }
    return out;
}

}  // namespace detail

// (H,W,C) -> (num_windows, win*win, C), non-overlapping
template <typename T>
NodePtr<T> window_partition(NodePtr<T> a, i64 win) {
    require(a->value.rank() == 3 && a->value.dim(0) % win == 0 && a->value.dim(1) % win == 0,
            "window_partition", "grid " + shape_str(a->value.shape()) + " not divisible by window " +
                                    std::to_string(win));
    const i64 H = a->value.dim(0), W = a->value.dim(1);
    return make_op<T>("window_partition", detail::window_split(a->value, win), {a},
                      [win, H, W](Node<T>& self) {
                          acc_grad(*self.parents[0], detail::window_merge(self.grad, win, H, W));
                      });
}

template <typename T>
NodePtr<T> window_reverse(NodePtr<T> a, i64 win, i64 H, i64 W) {
    require(a->value.rank() == 3 && a->value.dim(1) == win * win &&
                a->value.dim(0) == (H / win) * (W / win),
            "window_reverse", shape_str(a->value.shape()));
    return make_op<T>("window_reverse", detail::window_merge(a->value, win, H, W), {a},
                      [win](Node<T>& self) {
                          acc_grad(*self.parents[0], detail::window_split(self.grad, win));
                      });
}

// Forward differences along x then y, zero at the trailing border.
// (H,W,C) -> (H,W,2C): channels [0,C) = d/dx, [C,2C) = d/dy.
template <typename T>
NodePtr<T> image_grad(NodePtr<T> a) {
    require(a->value.rank() == 3, "image_grad", shape_str(a->value.shape()));
    const i64 H = a->value.dim(0), W = a->value.dim(1), C = a->value.dim(2);
    Tensor<T> out({H, W, 2 * C});
    const T* ad = a->value.data();
    T* od = out.data();
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x) {
            const T* p = ad + (y * W + x) * C;
            T* d = od + (y * W + x) * 2 * C;
            for (i64 c = 0; c < C; ++c) {
                d[c] = x + 1 < W ? ad[(y * W + x + 1) * C + c] - p[c] : T(0);
                d[C + c] = y + 1 < H ? ad[((y + 1) * W + x) * C + c] - p[c] : T(0);
            }
        }
    return make_op<T>("image_grad", std::move(out), {a}, [H, W, C](Node<T>& self) {
        T* da = self.parents[0]->ensure_grad().data();
        const T* gd = self.grad.data();
        for (i64 y = 0; y < H; ++y)
            for (i64 x = 0; x < W; ++x)
                for (i64 c = 0; c < C; ++c) {
                    T acc = 0;
                    if (x + 1 < W) acc -= gd[(y * W + x) * 2 * C + c];
                    if (x > 0) acc += gd[(y * W + x - 1) * 2 * C + c];
                    if (y + 1 < H) acc -= gd[(y * W + x) * 2 * C + C + c];
                    if (y > 0) acc += gd[((y - 1) * W + x) * 2 * C + C + c];
                    da[(y * W + x) * C + c] += acc;
                }
    });
}

}  // namespace dpmn
