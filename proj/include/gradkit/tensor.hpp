#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gradkit/common.hpp"

namespace gradkit {

/// Dense shape descriptor. Row-major, array convention (first index = row),
/// matching how the rest of the library addresses spatial data.
struct Shape {
    std::vector<int> dims;

    Shape() = default;
    Shape(std::initializer_list<int> d) : dims(d) { validate(); }
    explicit Shape(std::vector<int> d) : dims(std::move(d)) { validate(); }

    int rank() const { return static_cast<int>(dims.size()); }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : dims) n *= d;
        return n;
    }

    int operator[](int i) const { return dims[static_cast<std::size_t>(i)]; }

    bool operator==(const Shape& o) const { return dims == o.dims; }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
        os << ']';
        return os.str();
    }

private:
    void validate() const {
        for (int d : dims)
            if (d < 1) throw ShapeError("shape entries must be >= 1, got " + str());
    }
};

/// Dense n-dimensional array of binary64 reals, row-major.
/// Treated as an immutable value after construction: all library operations
/// build new tensors, which keeps sharing across threads safe.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(shape_.numel()), fill);
    }

    Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (static_cast<std::int64_t>(data_.size()) != shape_.numel())
            throw ShapeError("value list length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.str());
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return shape_.rank(); }
    int dim(int i) const { return shape_[i]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

    double at(int i) const { return data_[static_cast<std::size_t>(i)]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double at(int i, int j, int k) const {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double at(int i, int j, int k, int l) const {
        return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double& at(int i) { return data_[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    Tensor reshaped(Shape s) const {
        if (s.numel() != numel())
            throw ShapeError("reshape " + shape_.str() + " -> " + s.str() + " changes element count");
        Tensor out = *this;
        out.shape_ = std::move(s);
        return out;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

/// tensor_new per the module contract: fill constant or explicit value list.
inline Tensor tensor_new(Shape shape, double fill) { return Tensor(std::move(shape), fill); }
inline Tensor tensor_new(Shape shape, std::vector<double> values) {
    return Tensor(std::move(shape), std::move(values));
}

inline Tensor identity_matrix(int n) {
    Tensor out = Tensor::zeros(Shape{n, n});
    for (int i = 0; i < n; ++i) out.at(i, i) = 1.0;
    return out;
}

/// c[i,j] = sum_l a[i,l] * b[l,j]. Rank-1 right operand is treated as a
/// column vector and gives a rank-1 result.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2) throw ShapeError("matmul: left operand must be rank 2, got " + a.shape().str());
    const bool vec = b.rank() == 1;
    if (!vec && b.rank() != 2)
        throw ShapeError("matmul: right operand must be rank 1 or 2, got " + b.shape().str());
    const int n = a.dim(0), k = a.dim(1);
    const int k2 = b.dim(0);
    const int m = vec ? 1 : b.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner dims disagree, " + a.shape().str() + " vs " + b.shape().str());
    Tensor c = vec ? Tensor::zeros(Shape{n}) : Tensor::zeros(Shape{n, m});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int i = 0; i < n; ++i) {
        for (int l = 0; l < k; ++l) {
            const double ail = pa[static_cast<std::size_t>(i) * k + l];
            if (ail == 0.0) continue;
            const double* bl = pb + static_cast<std::size_t>(l) * m;
            double* ci = pc + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) ci[j] += ail * bl[j];
        }
    }
    return c;
}

enum class EwOp { Add, Sub, Mul, Max };

inline Tensor ew_binary(EwOp op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("elementwise op on mismatched shapes " + a.shape().str() + " vs " +
                         b.shape().str());
    Tensor out = a;
    double* po = out.data();
    const double* pb = b.data();
    const std::int64_t n = a.numel();
    switch (op) {
        case EwOp::Add:
            for (std::int64_t i = 0; i < n; ++i) po[i] += pb[i];
            break;
        case EwOp::Sub:
            for (std::int64_t i = 0; i < n; ++i) po[i] -= pb[i];
            break;
        case EwOp::Mul:
            for (std::int64_t i = 0; i < n; ++i) po[i] *= pb[i];
            break;
        case EwOp::Max:
            for (std::int64_t i = 0; i < n; ++i) po[i] = std::max(po[i], pb[i]);
            break;
    }
    return out;
}

inline Tensor ew_add(const Tensor& a, const Tensor& b) { return ew_binary(EwOp::Add, a, b); }
inline Tensor ew_sub(const Tensor& a, const Tensor& b) { return ew_binary(EwOp::Sub, a, b); }
inline Tensor ew_mul(const Tensor& a, const Tensor& b) { return ew_binary(EwOp::Mul, a, b); }
inline Tensor ew_max(const Tensor& a, const Tensor& b) { return ew_binary(EwOp::Max, a, b); }

inline Tensor ew_scale(const Tensor& a, double c) {
    Tensor out = a;
    for (auto& v : out.vec()) v *= c;
    return out;
}

namespace detail {
inline void check_axis(const Tensor& a, int axis) {
    if (axis < 0 || axis >= a.rank())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + a.shape().str());
}

inline Shape drop_axis(const Shape& s, int axis) {
    std::vector<int> d;
    for (int i = 0; i < s.rank(); ++i)
        if (i != axis) d.push_back(s[i]);
    if (d.empty()) d.push_back(1);
    return Shape(d);
}

// Iterate a as outer x axis x inner.
template <typename F>
inline void for_axis(const Tensor& a, int axis, F&& f) {
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const std::int64_t n = a.dim(axis);
    const double* p = a.data();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in)
            f(o * inner + in, [&](std::int64_t k) { return p[(o * n + k) * inner + in]; }, n);
}
} // namespace detail

inline Tensor reduce_sum(const Tensor& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i];
    return Tensor::scalar(s);
}

inline Tensor reduce_sum(const Tensor& a, int axis) {
    detail::check_axis(a, axis);
    Tensor out = Tensor::zeros(detail::drop_axis(a.shape(), axis));
    detail::for_axis(a, axis, [&](std::int64_t flat, auto get, std::int64_t n) {
        double s = 0.0;
        for (std::int64_t k = 0; k < n; ++k) s += get(k);
        out[flat] = s;
    });
    return out;
}

inline Tensor reduce_max(const Tensor& a) {
    double m = a[0];
    for (std::int64_t i = 1; i < a.numel(); ++i) m = std::max(m, a[i]);
    return Tensor::scalar(m);
}

inline Tensor reduce_max(const Tensor& a, int axis) {
    detail::check_axis(a, axis);
    Tensor out = Tensor::zeros(detail::drop_axis(a.shape(), axis));
    detail::for_axis(a, axis, [&](std::int64_t flat, auto get, std::int64_t n) {
        double m = get(0);
        for (std::int64_t k = 1; k < n; ++k) m = std::max(m, get(k));
        out[flat] = m;
    });
    return out;
}

/// Global argmax; ties break to the lowest flat index.
inline std::int64_t reduce_argmax(const Tensor& a) {
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < a.numel(); ++i)
        if (a[i] > a[best]) best = i;
    return best;
}

/// Per-slice argmax along an axis (indices returned as doubles); lowest index wins ties.
inline Tensor reduce_argmax(const Tensor& a, int axis) {
    detail::check_axis(a, axis);
    Tensor out = Tensor::zeros(detail::drop_axis(a.shape(), axis));
    detail::for_axis(a, axis, [&](std::int64_t flat, auto get, std::int64_t n) {
        std::int64_t best = 0;
        for (std::int64_t k = 1; k < n; ++k)
            if (get(k) > get(best)) best = k;
        out[flat] = static_cast<double>(best);
    });
    return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ShapeError("dot: element counts differ");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: shapes differ");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

} // namespace gradkit
