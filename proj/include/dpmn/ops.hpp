#pragma once

#include <cmath>

#include "dpmn/graph.hpp"
#include "dpmn/kernels.hpp"

// Elementwise, matmul, shape and normalization ops. Broadcasting is limited to
// the second operand being a scalar or a suffix of the first operand's shape
// (i.e. broadcast over leading dims); anything else is a shape error.

namespace dpmn {

namespace detail {

template <typename T>
inline void check_bcast(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.same_shape(b) || b.numel() == 1) return;
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (bs.size() <= as.size()) {
        bool suffix = true;
        for (size_t i = 0; i < bs.size(); ++i)
            suffix = suffix && bs[bs.size() - 1 - i] == as[as.size() - 1 - i];
        if (suffix) return;
    }
    fail_shape(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                       " (broadcast allowed over leading dims only)");
}

// db[j] += sum_{i mod bn == j} g[i], optionally weighted by w[i]
template <typename T>
inline void reduce_to(Tensor<T>& db, const Tensor<T>& g, const T* w) {
    const i64 bn = db.numel();
    const i64 n = g.numel();
    T* d = db.data();
    const T* gd = g.data();
    if (w) {
        for (i64 i = 0; i < n; ++i) d[i % bn] += gd[i] * w[i];
    } else {
        for (i64 i = 0; i < n; ++i) d[i % bn] += gd[i];
    }
}

}  // namespace detail

template <typename T>
NodePtr<T> add(NodePtr<T> a, NodePtr<T> b) {
    detail::check_bcast("add", a->value, b->value);
    const i64 n = a->value.numel(), bn = b->value.numel();
    Tensor<T> out(a->value.shape());
    const T* ad = a->value.data();
    const T* bd = b->value.data();
    T* od = out.data();
    for (i64 i = 0; i < n; ++i) od[i] = ad[i] + bd[i % bn];
    return make_op<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) acc_grad(pa, self.grad);
        if (pb.requires_grad) detail::reduce_to(pb.ensure_grad(), self.grad, static_cast<const T*>(nullptr));
    });
}

template <typename T>
NodePtr<T> sub(NodePtr<T> a, NodePtr<T> b) {
    detail::check_bcast("sub", a->value, b->value);
    const i64 n = a->value.numel(), bn = b->value.numel();
    Tensor<T> out(a->value.shape());
    const T* ad = a->value.data();
    const T* bd = b->value.data();
    T* od = out.data();
    for (i64 i = 0; i < n; ++i) od[i] = ad[i] - bd[i % bn];
    return make_op<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) acc_grad(pa, self.grad);
        if (pb.requires_grad) {
            Tensor<T>& db = pb.ensure_grad();
            const i64 bn2 = db.numel();
            const T* gd = self.grad.data();
            T* d = db.data();
            for (i64 i = 0; i < self.grad.numel(); ++i) d[i % bn2] -= gd[i];
        }
    });
}

template <typename T>
NodePtr<T> mul(NodePtr<T> a, NodePtr<T> b) {
    detail::check_bcast("mul", a->value, b->value);
    const i64 n = a->value.numel(), bn = b->value.numel();
    Tensor<T> out(a->value.shape());
    const T* ad = a->value.data();
    const T* bd = b->value.data();
    T* od = out.data();
    for (i64 i = 0; i < n; ++i) od[i] = ad[i] * bd[i % bn];
    return make_op<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T* gd = self.grad.data();
        if (pa.requires_grad) {
            Tensor<T>& da = pa.ensure_grad();
            const T* bv = pb.value.data();
            const i64 bn2 = pb.value.numel();
            T* d = da.data();
            for (i64 i = 0; i < da.numel(); ++i) d[i] += gd[i] * bv[i % bn2];
        }
        if (pb.requires_grad) detail::reduce_to(pb.ensure_grad(), self.grad, pa.value.data());
    });
}

template <typename T>
NodePtr<T> scale(NodePtr<T> a, double s) {
    Tensor<T> out(a->value.shape());
    const T* ad = a->value.data();
    T* od = out.data();
    const T sv = static_cast<T>(s);
    for (i64 i = 0; i < out.numel(); ++i) od[i] = ad[i] * sv;
    return make_op<T>("scale", std::move(out), {a}, [sv](Node<T>& self) {
        Tensor<T>& da = self.parents[0]->ensure_grad();
        const T* gd = self.grad.data();
        T* d = da.data();
        for (i64 i = 0; i < da.numel(); ++i) d[i] += gd[i] * sv;
    });
}

template <typename T>
NodePtr<T> abs_op(NodePtr<T> a) {
    Tensor<T> out(a->value.shape());
    const T* ad = a->value.data();
    T* od = out.data();
    for (i64 i = 0; i < out.numel(); ++i) od[i] = std::abs(ad[i]);
    return make_op<T>("abs", std::move(out), {a}, [](Node<T>& self) {
        Tensor<T>& da = self.parents[0]->ensure_grad();
        const T* av = self.parents[0]->value.data();
        const T* gd = self.grad.data();
        T* d = da.data();
        for (i64 i = 0; i < da.numel(); ++i)
            d[i] += av[i] > T(0) ? gd[i] : (av[i] < T(0) ? -gd[i] : T(0));
    });
}

template <typename T>
NodePtr<T> gelu(NodePtr<T> a) {
    Tensor<T> out(a->value.shape());
    const T* ad = a->value.data();
    T* od = out.data();
    for (i64 i = 0; i < out.numel(); ++i) {
        const double x = static_cast<double>(ad[i]);
        od[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)));
    }
    return make_op<T>("gelu", std::move(out), {a}, [](Node<T>& self) {
        Tensor<T>& da = self.parents[0]->ensure_grad();
        const T* av = self.parents[0]->value.data();
        const T* gd = self.grad.data();
        T* d = da.data();
        for (i64 i = 0; i < da.numel(); ++i) {
            const double x = static_cast<double>(av[i]);
            const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
            const double pdf = 0.39894228040143267794 * std::exp(-0.5 * x * x);
            d[i] += gd[i] * static_cast<T>(cdf + x * pdf);
        }
    });
}

template <typename T>
NodePtr<T> sigmoid(NodePtr<T> a) {
    Tensor<T> out(a->value.shape());
    const T* ad = a->value.data();
    T* od = out.data();
    for (i64 i = 0; i < out.numel(); ++i)
        od[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(ad[i]))));
    return make_op<T>("sigmoid", std::move(out), {a}, [out](Node<T>& self) {
        Tensor<T>& da = self.parents[0]->ensure_grad();
        const T* y = self.value.data();
        const T* gd = self.grad.data();
        T* d = da.data();
        for (i64 i = 0; i < da.numel(); ++i) d[i] += gd[i] * y[i] * (T(1) - y[i]);
    });
}

template <typename T>
NodePtr<T> stop_gradient(NodePtr<T> a) {
    auto n = std::make_shared<Node<T>>();
    n->op = "stop_gradient";
    n->value = a->value;  // shares storage; values are immutable
    n->requires_grad = false;
    return n;
}

template <typename T>
NodePtr<T> matmul(NodePtr<T> a, NodePtr<T> b) {
    require(a->value.rank() == 2 && b->value.rank() == 2 && a->value.dim(1) == b->value.dim(0),
            "matmul", shape_str(a->value.shape()) + " x " + shape_str(b->value.shape()));
    const i64 M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(1);
    Tensor<T> out({M, N});
    mm_acc(a->value.data(), b->value.data(), out.data(), M, K, N);
    return make_op<T>("matmul", std::move(out), {a, b}, [M, K, N](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad)
            mm_nt_acc(self.grad.data(), pb.value.data(), pa.ensure_grad().data(), M, N, K);
        if (pb.requires_grad)
            mm_tn_acc(pa.value.data(), self.grad.data(), pb.ensure_grad().data(), M, K, N);
    });
}

// (B,M,K) x (B,K,N) -> (B,M,N)
template <typename T>
NodePtr<T> bmm(NodePtr<T> a, NodePtr<T> b) {
    require(a->value.rank() == 3 && b->value.rank() == 3 && a->value.dim(0) == b->value.dim(0) &&
                a->value.dim(2) == b->value.dim(1),
            "bmm", shape_str(a->value.shape()) + " x " + shape_str(b->value.shape()));
    const i64 B = a->value.dim(0), M = a->value.dim(1), K = a->value.dim(2), N = b->value.dim(2);
    Tensor<T> out({B, M, N});
    const T* ad = a->value.data();
    const T* bd = b->value.data();
    T* od = out.data();
    parallel_for(B, [=](i64 b0, i64 b1) {
        for (i64 i = b0; i < b1; ++i)
            mm_acc(ad + i * M * K, bd + i * K * N, od + i * M * N, M, K, N);
    }, 1);
    return make_op<T>("bmm", std::move(out), {a, b}, [B, M, K, N](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T* gd = self.grad.data();
        if (pa.requires_grad) {
            T* da = pa.ensure_grad().data();
            const T* bv = pb.value.data();
            parallel_for(B, [=](i64 b0, i64 b1) {
                for (i64 i = b0; i < b1; ++i)
                    mm_nt_acc(gd + i * M * N, bv + i * K * N, da + i * M * K, M, N, K);
            }, 1);
        }
        if (pb.requires_grad) {
            T* db = pb.ensure_grad().data();
            const T* av = pa.value.data();
            parallel_for(B, [=](i64 b0, i64 b1) {
                for (i64 i = b0; i < b1; ++i)
                    mm_tn_acc(av + i * M * K, gd + i * M * N, db + i * K * N, M, K, N);
            }, 1);
        }
    });
}

namespace detail {

inline std::vector<i64> strides_of(const Shape& s) {
    std::vector<i64> st(s.size(), 1);
    for (i64 i = static_cast<i64>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

template <typename T>
Tensor<T> tensor_transpose(const Tensor<T>& a, const std::vector<int>& perm) {
    const auto& as = a.shape();
    Shape os(as.size());
    for (size_t i = 0; i < perm.size(); ++i) os[i] = as[static_cast<size_t>(perm[i])];
    Tensor<T> out(os);
    const auto ast = strides_of(as);
    const auto ost = strides_of(os);
    const i64 n = a.numel();
    const i64 rank = static_cast<i64>(as.size());
    const T* ad = a.data();
    T* od = out.data();
    parallel_for(n, [&, ad, od](i64 i0, i64 i1) {
        std::vector<i64> idx(rank);
        for (i64 i = i0; i < i1; ++i) {
            i64 rem = i;
            for (i64 d = 0; d < rank; ++d) {
                idx[d] = rem / ost[d];
                rem %= ost[d];
            }
            i64 src = 0;
            for (i64 d = 0; d < rank; ++d) src += idx[d] * ast[static_cast<size_t>(perm[d])];
            od[i] = ad[src];
        }
    }, 4096);
    return out;
}

}  // namespace detail

template <typename T>
NodePtr<T> transpose(NodePtr<T> a, std::vector<int> perm) {
    require(perm.size() == a->value.shape().size(), "transpose", "perm rank mismatch");
    Tensor<T> out = detail::tensor_transpose(a->value, perm);
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
    return make_op<T>("transpose", std::move(out), {a}, [inv](Node<T>& self) {
        acc_grad(*self.parents[0], detail::tensor_transpose(self.grad, inv));
    });
}

template <typename T>
NodePtr<T> reshape(NodePtr<T> a, Shape s) {
    Tensor<T> out = a->value.reshaped(s);  // shares storage
    return make_op<T>("reshape", std::move(out), {a}, [](Node<T>& self) {
        acc_grad(*self.parents[0], self.grad.reshaped(self.parents[0]->value.shape()));
    });
}

template <typename T>
NodePtr<T> slice(NodePtr<T> a, i64 axis, i64 start, i64 len) {
    const auto& as = a->value.shape();
    require(axis >= 0 && axis < a->value.rank() && start >= 0 && len > 0 &&
                start + len <= as[static_cast<size_t>(axis)],
            "slice", "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") on axis " + std::to_string(axis) + " of " + shape_str(as));
    Shape os = as;
    os[static_cast<size_t>(axis)] = len;
    i64 outer = 1, inner = 1;
    for (i64 d = 0; d < axis; ++d) outer *= as[static_cast<size_t>(d)];
    for (i64 d = axis + 1; d < a->value.rank(); ++d) inner *= as[static_cast<size_t>(d)];
    const i64 dim = as[static_cast<size_t>(axis)];
    Tensor<T> out(os);
    const T* ad = a->value.data();
    T* od = out.data();
    for (i64 o = 0; o < outer; ++o)
        std::copy(ad + (o * dim + start) * inner, ad + (o * dim + start + len) * inner,
                  od + o * len * inner);
    return make_op<T>("slice", std::move(out), {a}, [outer, inner, dim, start, len](Node<T>& self) {
        Tensor<T>& da = self.parents[0]->ensure_grad();
        const T* gd = self.grad.data();
        T* d = da.data();
        for (i64 o = 0; o < outer; ++o) {
            T* dst = d + (o * dim + start) * inner;
            const T* src = gd + o * len * inner;
            for (i64 i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

template <typename T>
NodePtr<T> concat(std::vector<NodePtr<T>> parts, i64 axis) {
    require(!parts.empty(), "concat", "no inputs");
    const auto& s0 = parts[0]->value.shape();
    const i64 rank = parts[0]->value.rank();
    require(axis >= 0 && axis < rank, "concat", "bad axis");
    i64 total = 0;
    for (const auto& p : parts) {
        const auto& ps = p->value.shape();
        require(static_cast<i64>(ps.size()) == rank, "concat", "rank mismatch");
        for (i64 d = 0; d < rank; ++d)
            require(d == axis || ps[static_cast<size_t>(d)] == s0[static_cast<size_t>(d)], "concat",
                    "dim mismatch " + shape_str(ps) + " vs " + shape_str(s0));
        total += ps[static_cast<size_t>(axis)];
    }
    Shape os = s0;
    os[static_cast<size_t>(axis)] = total;
    i64 outer = 1, inner = 1;
    for (i64 d = 0; d < axis; ++d) outer *= s0[static_cast<size_t>(d)];
    for (i64 d = axis + 1; d < rank; ++d) inner *= s0[static_cast<size_t>(d)];
    Tensor<T> out(os);
    T* od = out.data();
    std::vector<i64> dims;
    i64 off = 0;
    for (const auto& p : parts) {
        const i64 dl = p->value.dim(axis);
        dims.push_back(dl);
        const T* pd = p->value.data();
        for (i64 o = 0; o < outer; ++o)
            std::copy(pd + o * dl * inner, pd + (o + 1) * dl * inner,
                      od + (o * total + off) * inner);
        off += dl;
    }
    return make_op<T>("concat", std::move(out), std::move(parts),
                      [outer, inner, total, dims](Node<T>& self) {
                          const T* gd = self.grad.data();
                          i64 off2 = 0;
                          for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                              auto& p = *self.parents[pi];
                              const i64 dl = dims[pi];
                              if (p.requires_grad) {
                                  T* d = p.ensure_grad().data();
                                  for (i64 o = 0; o < outer; ++o) {
                                      const T* src = gd + (o * total + off2) * inner;
                                      T* dst = d + o * dl * inner;
                                      for (i64 i = 0; i < dl * inner; ++i) dst[i] += src[i];
                                  }
                              }
                              off2 += dl;
                          }
                      });
}

// softmax over the last axis
template <typename T>
NodePtr<T> softmax(NodePtr<T> a) {
    const i64 cdim = a->value.dim(a->value.rank() - 1);
    const i64 rows = a->value.numel() / cdim;
    Tensor<T> out(a->value.shape());
    const T* ad = a->value.data();
    T* od = out.data();
    parallel_for(rows, [=](i64 r0, i64 r1) {
        for (i64 r = r0; r < r1; ++r) {
            const T* x = ad + r * cdim;
            T* y = od + r * cdim;
            T m = x[0];
            for (i64 j = 1; j < cdim; ++j) m = std::max(m, x[j]);
            double s = 0;
            for (i64 j = 0; j < cdim; ++j) {
                const double e = std::exp(static_cast<double>(x[j] - m));
                y[j] = static_cast<T>(e);
                s += e;
            }
            const double inv = 1.0 / s;
            for (i64 j = 0; j < cdim; ++j) y[j] = static_cast<T>(y[j] * inv);
        }
    }, 16);
    return make_op<T>("softmax", std::move(out), {a}, [cdim, rows](Node<T>& self) {
        Tensor<T>& da = self.parents[0]->ensure_grad();
        const T* y = self.value.data();
        const T* gd = self.grad.data();
        T* d = da.data();
        parallel_for(rows, [=](i64 r0, i64 r1) {
            for (i64 r = r0; r < r1; ++r) {
                const T* yr = y + r * cdim;
                const T* gr = gd + r * cdim;
                T* dr = d + r * cdim;
                double dot = 0;
                for (i64 j = 0; j < cdim; ++j) dot += static_cast<double>(gr[j]) * yr[j];
                for (i64 j = 0; j < cdim; ++j)
                    dr[j] += yr[j] * (gr[j] - static_cast<T>(dot));
            }
        }, 16);
    });
}

inline constexpr double kLayerNormEps = 1e-8;

// layernorm over the last axis with learnable scale/shift
template <typename T>
NodePtr<T> layernorm(NodePtr<T> a, NodePtr<T> gamma, NodePtr<T> beta) {
    const i64 cdim = a->value.dim(a->value.rank() - 1);
    require(gamma->value.numel() == cdim && beta->value.numel() == cdim, "layernorm",
            "scale/shift size " + std::to_string(gamma->value.numel()) + " vs last dim " +
                std::to_string(cdim));
    const i64 rows = a->value.numel() / cdim;
    Tensor<T> out(a->value.shape());
    Tensor<T> xhat(a->value.shape());
    Tensor<T> inv_std({rows});
    const T* ad = a->value.data();
    const T* gm = gamma->value.data();
    const T* bt = beta->value.data();
    T* od = out.data();
    T* xh = xhat.data();
    T* is = inv_std.data();
    parallel_for(rows, [=](i64 r0, i64 r1) {
        for (i64 r = r0; r < r1; ++r) {
            const T* x = ad + r * cdim;
            double mu = 0;
            for (i64 j = 0; j < cdim; ++j) mu += x[j];
            mu /= cdim;
            double var = 0;
            for (i64 j = 0; j < cdim; ++j) {
                const double d = x[j] - mu;
                var += d * d;
            }
            var /= cdim;
            const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
            is[r] = static_cast<T>(inv);
            T* xr = xh + r * cdim;
            T* yr = od + r * cdim;
            for (i64 j = 0; j < cdim; ++j) {
                xr[j] = static_cast<T>((x[j] - mu) * inv);
                yr[j] = gm[j] * xr[j] + bt[j];
            }
        }
    }, 16);
    return make_op<T>("layernorm", std::move(out), {a, gamma, beta},
                      [cdim, rows, xhat, inv_std](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pg = *self.parents[1];
                          auto& pb = *self.parents[2];
                          const T* gd = self.grad.data();
                          const T* xh2 = xhat.data();
                          const T* is2 = inv_std.data();
                          if (pg.requires_grad || pb.requires_grad) {
                              T* dg = pg.ensure_grad().data();
                              T* db = pb.ensure_grad().data();
                              for (i64 r = 0; r < rows; ++r)
                                  for (i64 j = 0; j < cdim; ++j) {
                                      dg[j] += gd[r * cdim + j] * xh2[r * cdim + j];
                                      db[j] += gd[r * cdim + j];
                                  }
                          }
                          if (pa.requires_grad) {
                              T* da = pa.ensure_grad().data();
                              const T* gm2 = pg.value.data();
                              parallel_for(rows, [=](i64 r0, i64 r1) {
                                  for (i64 r = r0; r < r1; ++r) {
                                      const T* gr = gd + r * cdim;
                                      const T* xr = xh2 + r * cdim;
                                      T* dr = da + r * cdim;
                                      double m1 = 0, m2 = 0;
                                      for (i64 j = 0; j < cdim; ++j) {
                                          const double dxh = static_cast<double>(gr[j]) * gm2[j];
                                          m1 += dxh;
                                          m2 += dxh * xr[j];
                                      }
                                      m1 /= cdim;
                                      m2 /= cdim;
                                      for (i64 j = 0; j < cdim; ++j) {
                                          const double dxh = static_cast<double>(gr[j]) * gm2[j];
                                          dr[j] += static_cast<T>((dxh - m1 - xr[j] * m2) * is2[r]);
                                      }
                                  }
                              }, 16);
                          }
                      });
}

// reduce over one axis
template <typename T>
NodePtr<T> sum(NodePtr<T> a, i64 axis) {
    const auto& as = a->value.shape();
    require(axis >= 0 && axis < a->value.rank(), "sum", "bad axis");
    i64 outer = 1, inner = 1;
    for (i64 d = 0; d < axis; ++d) outer *= as[static_cast<size_t>(d)];
    for (i64 d = axis + 1; d < a->value.rank(); ++d) inner *= as[static_cast<size_t>(d)];
    const i64 dim = as[static_cast<size_t>(axis)];
    Shape os;
    for (i64 d = 0; d < a->value.rank(); ++d)
        if (d != axis) os.push_back(as[static_cast<size_t>(d)]);
    if (os.empty()) os.push_back(1);
    Tensor<T> out(os);
    const T* ad = a->value.data();
    T* od = out.data();
    for (i64 o = 0; o < outer; ++o)
        for (i64 k = 0; k < dim; ++k)
            for (i64 i = 0; i < inner; ++i) od[o * inner + i] += ad[(o * dim + k) * inner + i];
    return make_op<T>("sum", std::move(out), {a}, [outer, inner, dim](Node<T>& self) {
        Tensor<T>& da = self.parents[0]->ensure_grad();
        const T* gd = self.grad.data();
        T* d = da.data();
        for (i64 o = 0; o < outer; ++o)
            for (i64 k = 0; k < dim; ++k)
                for (i64 i = 0; i < inner; ++i) d[(o * dim + k) * inner + i] += gd[o * inner + i];
    });
}

template <typename T>
NodePtr<T> mean(NodePtr<T> a, i64 axis) {
    const i64 dim = a->value.dim(axis);
    return scale(sum(a, axis), 1.0 / static_cast<double>(dim));
}

template <typename T>
NodePtr<T> sum_all(NodePtr<T> a) {
    double s = 0;
    const T* ad = a->value.data();
    for (i64 i = 0; i < a->value.numel(); ++i) s += static_cast<double>(ad[i]);
    Tensor<T> out({1});
    out[0] = static_cast<T>(s);
    return make_op<T>("sum_all", std::move(out), {a}, [](Node<T>& self) {
        Tensor<T>& da = self.parents[0]->ensure_grad();
        const T g = self.grad[0];
        T* d = da.data();
        for (i64 i = 0; i < da.numel(); ++i) d[i] += g;
    });
}

template <typename T>
NodePtr<T> mean_all(NodePtr<T> a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

}  // namespace dpmn
