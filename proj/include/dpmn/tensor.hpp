#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <vector>

#include "dpmn/common.hpp"
#include "dpmn/rng.hpp"

namespace dpmn {

// Dense row-major array with shared storage. Values are never mutated after an
// op produces them, so views (reshape, stop_gradient) can alias storage freely.
// Images are H x W x C, token grids H x W x D, matrices M x N.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(static_cast<size_t>(numel_of(shape_)), T(0))) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
        if (static_cast<i64>(values.size()) != numel_of(shape_))
            fail_shape("tensor", "value count " + std::to_string(values.size()) +
                                     " does not match shape " + shape_str(shape_));
        data_ = std::make_shared<std::vector<T>>(std::move(values));
    }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data_->begin(), t.data_->end(), v);
        return t;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
        Tensor t(std::move(shape));
        for (T& v : *t.data_) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    static Tensor view(Shape shape, std::shared_ptr<std::vector<T>> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        if (static_cast<i64>(t.data_->size()) != numel_of(t.shape_))
            fail_shape("tensor.view", "storage does not match shape " + shape_str(t.shape_));
        return t;
    }

    bool empty() const { return !data_; }
    const Shape& shape() const { return shape_; }
    i64 rank() const { return static_cast<i64>(shape_.size()); }
    i64 dim(i64 i) const { return shape_[static_cast<size_t>(i)]; }
    i64 numel() const { return data_ ? static_cast<i64>(data_->size()) : 0; }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }
    const std::shared_ptr<std::vector<T>>& storage() const { return data_; }

    T& operator[](i64 i) { return (*data_)[static_cast<size_t>(i)]; }
    const T& operator[](i64 i) const { return (*data_)[static_cast<size_t>(i)]; }

    // 3-D helpers (H x W x C)
    i64 h() const { return shape_[0]; }
    i64 w() const { return shape_[1]; }
    i64 c() const { return rank() >= 3 ? shape_[2] : 1; }
    T& at(i64 y, i64 x, i64 ch) { return (*data_)[static_cast<size_t>((y * w() + x) * c() + ch)]; }
    const T& at(i64 y, i64 x, i64 ch) const {
        return (*data_)[static_cast<size_t>((y * w() + x) * c() + ch)];
    }

    Tensor clone() const {
        if (!data_) return Tensor();
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<T>>(*data_);
        return t;
    }

    Tensor reshaped(Shape s) const {
        if (numel_of(s) != numel())
            fail_shape("reshape", shape_str(shape_) + " -> " + shape_str(s));
        return view(std::move(s), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t(shape_);
        const T* src = data();
        U* dst = t.data();
        const i64 n = numel();
        for (i64 i = 0; i < n; ++i) dst[i] = static_cast<U>(src[i]);
        return t;
    }

    void fill(T v) { std::fill(data_->begin(), data_->end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : *data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) fail_shape("max_abs_diff", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0;
    for (i64 i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) return false;
    for (i64 i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace dpmn
