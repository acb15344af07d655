#pragma once

#include "dpmn/tensor.hpp"
#include "dpmn/threads.hpp"

namespace dpmn {

// Dense kernels used by the op layer. All of them accumulate (+=) into the
// output and parallelize only over disjoint output rows.

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void mm_acc(const T* A, const T* B, T* C, i64 M, i64 K, i64 N) {
    parallel_for(M, [=](i64 i0, i64 i1) {
        for (i64 i = i0; i < i1; ++i) {
            T* c = C + i * N;
            const T* a = A + i * K;
            for (i64 k = 0; k < K; ++k) {
                const T av = a[k];
                const T* b = B + k * N;
                for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    }, 8);
}

// C[M,K] += A[M,N] * B[K,N]^T   (i.e. C = A * B')
template <typename T>
void mm_nt_acc(const T* A, const T* B, T* C, i64 M, i64 N, i64 K) {
    parallel_for(M, [=](i64 i0, i64 i1) {
        for (i64 i = i0; i < i1; ++i) {
            const T* a = A + i * N;
            T* c = C + i * K;
            for (i64 k = 0; k < K; ++k) {
                const T* b = B + k * N;
                T s = 0;
                for (i64 j = 0; j < N; ++j) s += a[j] * b[j];
                c[k] += s;
            }
        }
    }, 8);
}

// C[K,N] += A[M,K]^T * B[M,N]   (i.e. C = A' * B)
template <typename T>
void mm_tn_acc(const T* A, const T* B, T* C, i64 M, i64 K, i64 N) {
    parallel_for(K, [=](i64 k0, i64 k1) {
        for (i64 k = k0; k < k1; ++k) {
            T* c = C + k * N;
            for (i64 i = 0; i < M; ++i) {
                const T av = A[i * K + k];
                const T* b = B + i * N;
                for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
    }, 4);
}

struct ConvGeom {
    i64 h, w, cin, kh, kw, cout, stride, pad, oh, ow;
    i64 patch_len() const { return kh * kw * cin; }
    i64 out_positions() const { return oh * ow; }
};

inline ConvGeom conv_geom(i64 h, i64 w, i64 cin, i64 kh, i64 kw, i64 cout, i64 stride, i64 pad) {
    ConvGeom g{h, w, cin, kh, kw, cout, stride, pad, 0, 0};
    g.oh = (h + 2 * pad - kh) / stride + 1;
    g.ow = (w + 2 * pad - kw) / stride + 1;
    return g;
}

// col[(oy*ow+ox), (kh*KW+kw)*Cin+ci] with zero padding
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
    parallel_for(g.oh, [&, x, col](i64 y0, i64 y1) {
        for (i64 oy = y0; oy < y1; ++oy) {
            for (i64 ox = 0; ox < g.ow; ++ox) {
                T* dst = col + (oy * g.ow + ox) * g.patch_len();
                for (i64 ky = 0; ky < g.kh; ++ky) {
                    const i64 sy = oy * g.stride - g.pad + ky;
                    for (i64 kx = 0; kx < g.kw; ++kx) {
                        const i64 sx = ox * g.stride - g.pad + kx;
                        T* d = dst + (ky * g.kw + kx) * g.cin;
                        if (sy < 0 || sy >= g.h || sx < 0 || sx >= g.w) {
                            for (i64 c = 0; c < g.cin; ++c) d[c] = 0;
                        } else {
                            const T* s = x + (sy * g.w + sx) * g.cin;
                            for (i64 c = 0; c < g.cin; ++c) d[c] = s[c];
                        }
                    }
                }
            }
        }
    }, 1);
}

// dX[y,x,c] += sum over kernel taps of dcol rows that read (y,x,c); the gather
// form keeps each input element owned by one thread.
template <typename T>
void col2im_acc(const T* dcol, const ConvGeom& g, T* dx) {
    parallel_for(g.h, [&, dcol, dx](i64 y0, i64 y1) {
        for (i64 y = y0; y < y1; ++y) {
            for (i64 x = 0; x < g.w; ++x) {
                T* d = dx + (y * g.w + x) * g.cin;
                for (i64 ky = 0; ky < g.kh; ++ky) {
                    const i64 ty = y + g.pad - ky;
                    if (ty < 0 || ty % g.stride) continue;
                    const i64 oy = ty / g.stride;
                    if (oy >= g.oh) continue;
                    for (i64 kx = 0; kx < g.kw; ++kx) {
                        const i64 tx = x + g.pad - kx;
                        if (tx < 0 || tx % g.stride) continue;
                        const i64 ox = tx / g.stride;
                        if (ox >= g.ow) continue;
                        const T* s = dcol + ((oy * g.ow + ox) * g.kh * g.kw + ky * g.kw + kx) * g.cin;
                        for (i64 c = 0; c < g.cin; ++c) d[c] += s[c];
                    }
                }
            }
        }
    }, 1);
}

}  // namespace dpmn
