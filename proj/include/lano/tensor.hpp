#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lano/error.hpp"

namespace lano {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

/// Dense row-major n-dimensional array. Immutable by convention once built:
/// kernels return fresh tensors instead of writing through references.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {
        check_shape();
    }

    Tensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (shape_numel(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    /// Row-major rank-2 convenience constructor.
    static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows) {
        const std::size_t m = rows.size();
        const std::size_t n = m ? rows.begin()->size() : 0;
        std::vector<T> data;
        data.reserve(m * n);
        for (const auto& r : rows) {
            if (r.size() != n) throw ShapeError("ragged initializer for rank-2 tensor");
            data.insert(data.end(), r.begin(), r.end());
        }
        return Tensor({m, n}, std::move(data));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Rank-2 element access.
    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool is_scalar() const { return data_.size() == 1; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

  private:
    void check_shape() const {
        for (std::size_t e : shape_)
            if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* who) {
    if (t.rank() != 2)
        throw ShapeError(std::string(who) + ": expected rank-2 tensor, got " +
                         shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise suite
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.same_shape(b), "add: shape mismatch " + shape_str(a.shape()) +
                                         " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.same_shape(b), "sub: shape mismatch " + shape_str(a.shape()) +
                                         " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.same_shape(b), "mul: shape mismatch " + shape_str(a.shape()) +
                                         " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
    return out;
}

namespace detail {
// tanh-approximate gelu; the derivative lives next to it so the two stay in sync.
template <typename T>
inline T gelu_scalar(T x) {
    const T c = T(0.7978845608028654);  // sqrt(2/pi)
    const T u = c * (x + T(0.044715) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
inline T gelu_grad_scalar(T x) {
    const T c = T(0.7978845608028654);
    const T u = c * (x + T(0.044715) * x * x * x);
    const T t = std::tanh(u);
    const T sech2 = T(1) - t * t;
    return T(0.5) * (T(1) + t) + T(0.5) * x * sech2 * c * (T(1) + T(3) * T(0.044715) * x * x);
}
}  // namespace detail

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = detail::gelu_scalar(a[i]);
    return out;
}

template <typename T>
Tensor<T> sqrt_elem(const Tensor<T>& a) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::sqrt(a[i]);
    return out;
}

template <typename T>
T sum(const Tensor<T>& a) {
    T acc(0);
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    return acc;
}

/// Adds a row vector ([n] or [1xn]) to every row, or a column vector ([mx1])
/// to every column, of a rank-2 tensor. The single sanctioned broadcast.
template <typename T>
Tensor<T> broadcast_add(const Tensor<T>& x, const Tensor<T>& v) {
    detail::require_rank2(x, "broadcast_add");
    const std::size_t m = x.dim(0), n = x.dim(1);
    const bool row = (v.rank() == 1 && v.dim(0) == n) ||
                     (v.rank() == 2 && v.dim(0) == 1 && v.dim(1) == n);
    const bool col = v.rank() == 2 && v.dim(0) == m && v.dim(1) == 1;
    if (!row && !col)
        throw ShapeError("broadcast_add: vector " + shape_str(v.shape()) +
                         " incompatible with " + shape_str(x.shape()));
    Tensor<T> out(x.shape());
    if (row) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + v[j];
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + v[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.size())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(new_shape));
    Tensor<T> out(std::move(new_shape));
    std::copy(a.data(), a.data() + a.size(), out.data());
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_rank2(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor<T> out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= a.rank())
        throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(a.shape()));
    if (len == 0 || start + len > a.dim(axis))
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of bounds for " +
                         shape_str(a.shape()) + " axis " + std::to_string(axis));
    Shape out_shape = a.shape();
    out_shape[axis] = len;
    Tensor<T> out(out_shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const std::size_t src_stride = a.dim(axis) * inner;
    const std::size_t dst_stride = len * inner;
    for (std::size_t o = 0; o < outer; ++o)
        std::copy(a.data() + o * src_stride + start * inner,
                  a.data() + o * src_stride + (start + len) * inner,
                  out.data() + o * dst_stride);
    return out;
}

template <typename T>
Tensor<T> concat(std::size_t axis, const std::vector<const Tensor<T>*>& parts) {
    detail::require(!parts.empty(), "concat: empty part list");
    const Shape& base = parts[0]->shape();
    if (axis >= base.size())
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(base));
    std::size_t axis_total = 0;
    for (const Tensor<T>* p : parts) {
        if (p->rank() != base.size())
            throw ShapeError("concat: rank mismatch " + shape_str(p->shape()) + " vs " +
                             shape_str(base));
        for (std::size_t i = 0; i < base.size(); ++i)
            if (i != axis && p->dim(i) != base[i])
                throw ShapeError("concat: shape mismatch " + shape_str(p->shape()) +
                                 " vs " + shape_str(base) + " on axis " + std::to_string(i));
        axis_total += p->dim(axis);
    }
    Shape out_shape = base;
    out_shape[axis] = axis_total;
    Tensor<T> out(out_shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= base[i];
    for (std::size_t i = axis + 1; i < base.size(); ++i) inner *= base[i];
    const std::size_t dst_stride = axis_total * inner;
    std::size_t offset = 0;
    for (const Tensor<T>* p : parts) {
        const std::size_t src_stride = p->dim(axis) * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(p->data() + o * src_stride, p->data() + (o + 1) * src_stride,
                      out.data() + o * dst_stride + offset);
        offset += src_stride;
    }
    return out;
}

template <typename T>
Tensor<T> concat(std::size_t axis, const Tensor<T>& a, const Tensor<T>& b) {
    return concat<T>(axis, {&a, &b});
}

template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& a, std::size_t axis) {
    if (axis >= a.rank())
        throw ShapeError("mean_over_axis: axis " + std::to_string(axis) +
                         " out of range for " + shape_str(a.shape()));
    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.dim(i));
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor<T> out(out_shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const std::size_t k = a.dim(axis);
    const T inv = T(1) / T(k);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < inner; ++j) {
            T acc(0);
            for (std::size_t c = 0; c < k; ++c) acc += a[(o * k + c) * inner + j];
            out[o * inner + j] = acc * inv;
        }
    return out;
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a.data() + i * k;
        T* crow = out.data() + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* brow = b.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return out;
}

/// a (m x k) times b^T where b is (n x k). Avoids materializing transposes on
/// the hot attention paths.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank2(a, "matmul_nt");
    detail::require_rank2(b, "matmul_nt");
    if (a.dim(1) != b.dim(1))
        throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()) + " transposed");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a.data() + i * k;
        T* crow = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b.data() + j * k;
            T acc(0);
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = acc;
        }
    }
    return out;
}

/// a^T (a is k x m) times b (k x n).
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank2(a, "matmul_tn");
    detail::require_rank2(b, "matmul_tn");
    if (a.dim(0) != b.dim(0))
        throw ShapeError("matmul_tn: inner dimensions disagree, " + shape_str(a.shape()) +
                         " transposed vs " + shape_str(b.shape()));
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    for (std::size_t kk = 0; kk < k; ++kk) {
        const T* arow = a.data() + kk * m;
        const T* brow = b.data() + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = arow[i];
            T* crow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

/// Row-wise softmax with max subtraction. Rows are the last axis.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    detail::require(x.rank() >= 1, "softmax_rows: rank must be >= 1");
    const std::size_t n = x.dim(x.rank() - 1);
    const std::size_t rows = x.size() / n;
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = x.data() + r * n;
        T* dst = out.data() + r * n;
        T mx = src[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, src[j]);
        T denom(0);
        for (std::size_t j = 0; j < n; ++j) {
            dst[j] = std::exp(src[j] - mx);
            denom += dst[j];
        }
        const T inv = T(1) / denom;
        for (std::size_t j = 0; j < n; ++j) dst[j] *= inv;
    }
    return out;
}

/// Per-row normalization over the last axis with population variance and
/// eps inside the square root, then the affine map gamma * xhat + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    detail::require(x.rank() >= 1, "layer_norm: rank must be >= 1");
    const std::size_t d = x.dim(x.rank() - 1);
    detail::require(gamma.rank() == 1 && gamma.dim(0) == d,
                    "layer_norm: gamma shape " + shape_str(gamma.shape()) +
                        " does not match feature width " + std::to_string(d));
    detail::require(beta.rank() == 1 && beta.dim(0) == d,
                    "layer_norm: beta shape " + shape_str(beta.shape()) +
                        " does not match feature width " + std::to_string(d));
    const std::size_t rows = x.size() / d;
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = x.data() + r * d;
        T* dst = out.data() + r * d;
        T mean(0);
        for (std::size_t j = 0; j < d; ++j) mean += src[j];
        mean /= T(d);
        T var(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = src[j] - mean;
            var += c * c;
        }
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j)
            dst[j] = gamma[j] * ((src[j] - mean) * inv) + beta[j];
    }
    return out;
}

}  // namespace lano
