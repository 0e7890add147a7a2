#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lano/tensor.hpp"

// Reverse-mode differentiation on a dynamically built graph. Forward passes
// call the value kernels in tensor.hpp; each op records a closure that routes
// output-gradients to its parents. backward() runs one reverse topological
// sweep from a scalar root and *accumulates* into .grad, so calling it twice
// without clearing doubles every gradient. Parameters are leaves with
// requires_grad set; data enters as constants and is skipped by the sweep.

namespace lano::ad {

template <typename T>
struct Node;

template <typename T>
using Ptr = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first use, same shape as value
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Ptr<T>> parents;
    std::function<void(Node<T>&)> backprop;  // reads this->grad, accumulates into parents

    bool has_grad() const { return grad.size() == t_size(); }
    std::size_t t_size() const { return value.size(); }

    Tensor<T>& ensure_grad() {
        if (!has_grad()) grad = Tensor<T>(value.shape());
        return grad;
    }

    void accumulate(const Tensor<T>& g) {
        Tensor<T>& dst = ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }

    void clear_grad() { grad = Tensor<T>(); }
};

template <typename T>
Ptr<T> constant(Tensor<T> v, const char* name = "const") {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->op = name;
    return n;
}

template <typename T>
Ptr<T> param(Tensor<T> v, const char* name = "param") {
    auto n = constant(std::move(v), name);
    n->requires_grad = true;
    return n;
}

namespace detail {

template <typename T>
Ptr<T> make_op(Tensor<T> value, const char* op, std::vector<Ptr<T>> parents,
               std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->op = op;
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Ptr<T> add(const Ptr<T>& a, const Ptr<T>& b) {
    return detail::make_op<T>(lano::add(a->value, b->value), "add", {a, b},
                              [a, b](Node<T>& n) {
                                  if (a->requires_grad) a->accumulate(n.grad);
                                  if (b->requires_grad) b->accumulate(n.grad);
                              });
}

template <typename T>
Ptr<T> sub(const Ptr<T>& a, const Ptr<T>& b) {
    return detail::make_op<T>(lano::sub(a->value, b->value), "sub", {a, b},
                              [a, b](Node<T>& n) {
                                  if (a->requires_grad) a->accumulate(n.grad);
                                  if (b->requires_grad) b->accumulate(lano::scale(n.grad, T(-1)));
                              });
}

template <typename T>
Ptr<T> mul(const Ptr<T>& a, const Ptr<T>& b) {
    return detail::make_op<T>(lano::mul(a->value, b->value), "mul", {a, b},
                              [a, b](Node<T>& n) {
                                  if (a->requires_grad) a->accumulate(lano::mul(n.grad, b->value));
                                  if (b->requires_grad) b->accumulate(lano::mul(n.grad, a->value));
                              });
}

template <typename T>
Ptr<T> scale(const Ptr<T>& a, T s) {
    return detail::make_op<T>(lano::scale(a->value, s), "scale", {a},
                              [a, s](Node<T>& n) { a->accumulate(lano::scale(n.grad, s)); });
}

template <typename T>
Ptr<T> relu(const Ptr<T>& a) {
    return detail::make_op<T>(lano::relu(a->value), "relu", {a}, [a](Node<T>& n) {
        Tensor<T> g(n.grad.shape());
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] = a->value[i] > T(0) ? n.grad[i] : T(0);
        a->accumulate(g);
    });
}

template <typename T>
Ptr<T> gelu(const Ptr<T>& a) {
    return detail::make_op<T>(lano::gelu(a->value), "gelu", {a}, [a](Node<T>& n) {
        Tensor<T> g(n.grad.shape());
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] = n.grad[i] * lano::detail::gelu_grad_scalar(a->value[i]);
        a->accumulate(g);
    });
}

template <typename T>
Ptr<T> sqrt_elem(const Ptr<T>& a) {
    return detail::make_op<T>(lano::sqrt_elem(a->value), "sqrt", {a}, [a](Node<T>& n) {
        Tensor<T> g(n.grad.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] / (T(2) * n.value[i]);
        a->accumulate(g);
    });
}

template <typename T>
Ptr<T> sum(const Ptr<T>& a) {
    return detail::make_op<T>(Tensor<T>::scalar(lano::sum(a->value)), "sum", {a},
                              [a](Node<T>& n) {
                                  a->accumulate(Tensor<T>::full(a->value.shape(), n.grad[0]));
                              });
}

template <typename T>
Ptr<T> mean_over_axis(const Ptr<T>& a, std::size_t axis) {
    return detail::make_op<T>(
        lano::mean_over_axis(a->value, axis), "mean_over_axis", {a}, [a, axis](Node<T>& n) {
            const std::size_t k = a->value.dim(axis);
            std::size_t outer = 1, inner = 1;
            for (std::size_t i = 0; i < axis; ++i) outer *= a->value.dim(i);
            for (std::size_t i = axis + 1; i < a->value.rank(); ++i) inner *= a->value.dim(i);
            Tensor<T> g(a->value.shape());
            const T inv = T(1) / T(k);
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t c = 0; c < k; ++c)
                    for (std::size_t j = 0; j < inner; ++j)
                        g[(o * k + c) * inner + j] = n.grad[o * inner + j] * inv;
            a->accumulate(g);
        });
}

template <typename T>
Ptr<T> broadcast_add(const Ptr<T>& x, const Ptr<T>& v) {
    return detail::make_op<T>(
        lano::broadcast_add(x->value, v->value), "broadcast_add", {x, v}, [x, v](Node<T>& n) {
            if (x->requires_grad) x->accumulate(n.grad);
            if (!v->requires_grad) return;
            const std::size_t m = x->value.dim(0), nn = x->value.dim(1);
            const bool row = !(v->value.rank() == 2 && v->value.dim(0) == m &&
                               v->value.dim(1) == 1);
            Tensor<T> g(v->value.shape());
            if (row) {
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < nn; ++j) g[j] += n.grad[i * nn + j];
            } else {
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < nn; ++j) g[i] += n.grad[i * nn + j];
            }
            v->accumulate(g);
        });
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

template <typename T>
Ptr<T> reshape(const Ptr<T>& a, Shape new_shape) {
    return detail::make_op<T>(lano::reshape(a->value, std::move(new_shape)), "reshape", {a},
                              [a](Node<T>& n) {
                                  a->accumulate(lano::reshape(n.grad, a->value.shape()));
                              });
}

template <typename T>
Ptr<T> transpose(const Ptr<T>& a) {
    return detail::make_op<T>(lano::transpose(a->value), "transpose", {a},
                              [a](Node<T>& n) { a->accumulate(lano::transpose(n.grad)); });
}

template <typename T>
Ptr<T> slice(const Ptr<T>& a, std::size_t axis, std::size_t start, std::size_t len) {
    return detail::make_op<T>(
        lano::slice(a->value, axis, start, len), "slice", {a},
        [a, axis, start, len](Node<T>& n) {
            Tensor<T> g(a->value.shape());
            std::size_t outer = 1, inner = 1;
            for (std::size_t i = 0; i < axis; ++i) outer *= a->value.dim(i);
            for (std::size_t i = axis + 1; i < a->value.rank(); ++i) inner *= a->value.dim(i);
            const std::size_t src_stride = a->value.dim(axis) * inner;
            const std::size_t dst_stride = len * inner;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t e = 0; e < dst_stride; ++e)
                    g[o * src_stride + start * inner + e] = n.grad[o * dst_stride + e];
            a->accumulate(g);
        });
}

template <typename T>
Ptr<T> concat(std::size_t axis, const std::vector<Ptr<T>>& parts) {
    std::vector<const Tensor<T>*> vs;
    vs.reserve(parts.size());
    for (const auto& p : parts) vs.push_back(&p->value);
    Tensor<T> value = lano::concat(axis, vs);
    return detail::make_op<T>(value, "concat", parts, [parts, axis](Node<T>& n) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const std::size_t len = p->value.dim(axis);
            if (p->requires_grad) p->accumulate(lano::slice(n.grad, axis, off, len));
            off += len;
        }
    });
}

template <typename T>
Ptr<T> concat(std::size_t axis, const Ptr<T>& a, const Ptr<T>& b) {
    return concat<T>(axis, std::vector<Ptr<T>>{a, b});
}

// ---------------------------------------------------------------------------
// linear algebra / normalization
// ---------------------------------------------------------------------------

template <typename T>
Ptr<T> matmul(const Ptr<T>& a, const Ptr<T>& b) {
    return detail::make_op<T>(lano::matmul(a->value, b->value), "matmul", {a, b},
                              [a, b](Node<T>& n) {
                                  if (a->requires_grad)
                                      a->accumulate(lano::matmul_nt(n.grad, b->value));
                                  if (b->requires_grad)
                                      b->accumulate(lano::matmul_tn(a->value, n.grad));
                              });
}

template <typename T>
Ptr<T> softmax_rows(const Ptr<T>& x) {
    return detail::make_op<T>(lano::softmax_rows(x->value), "softmax_rows", {x},
                              [x](Node<T>& n) {
        // dx = (dy - rowsum(dy*y)) * y
        const Tensor<T>& y = n.value;
        const std::size_t cols = y.dim(y.rank() - 1);
        const std::size_t rows = y.size() / cols;
        Tensor<T> g(y.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* yv = y.data() + r * cols;
            const T* dy = n.grad.data() + r * cols;
            T dot(0);
            for (std::size_t j = 0; j < cols; ++j) dot += dy[j] * yv[j];
            T* dst = g.data() + r * cols;
            for (std::size_t j = 0; j < cols; ++j) dst[j] = (dy[j] - dot) * yv[j];
        }
        x->accumulate(g);
    });
}

template <typename T>
Ptr<T> layer_norm(const Ptr<T>& x, const Ptr<T>& gamma, const Ptr<T>& beta, T eps = T(1e-5)) {
    Tensor<T> y = lano::layer_norm(x->value, gamma->value, beta->value, eps);
    return detail::make_op<T>(
        y, "layer_norm", {x, gamma, beta}, [x, gamma, beta, eps](Node<T>& n) {
            const std::size_t d = x->value.dim(x->value.rank() - 1);
            const std::size_t rows = x->value.size() / d;
            Tensor<T> gx(x->value.shape());
            Tensor<T> ggamma({d});
            Tensor<T> gbeta({d});
            for (std::size_t r = 0; r < rows; ++r) {
                const T* src = x->value.data() + r * d;
                const T* dy = n.grad.data() + r * d;
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
                // dxhat_j = dy_j * gamma_j; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                T s1(0), s2(0);
                for (std::size_t j = 0; j < d; ++j) {
                    const T xhat = (src[j] - mean) * inv;
                    const T dxhat = dy[j] * gamma->value[j];
                    s1 += dxhat;
                    s2 += dxhat * xhat;
                    ggamma[j] += dy[j] * xhat;
                    gbeta[j] += dy[j];
                }
                s1 /= T(d);
                s2 /= T(d);
                T* dst = gx.data() + r * d;
                for (std::size_t j = 0; j < d; ++j) {
                    const T xhat = (src[j] - mean) * inv;
                    const T dxhat = dy[j] * gamma->value[j];
                    dst[j] = inv * (dxhat - s1 - xhat * s2);
                }
            }
            if (x->requires_grad) x->accumulate(gx);
            if (gamma->requires_grad) gamma->accumulate(ggamma);
            if (beta->requires_grad) beta->accumulate(gbeta);
        });
}

// ---------------------------------------------------------------------------
// backward driver
// ---------------------------------------------------------------------------

/// Reverse topological sweep from a scalar root. Seeds d(root)/d(root) = 1
/// and routes gradients to every requires_grad node reachable through
/// differentiable parents. Interior nodes get a fresh gradient per sweep;
/// leaf gradients accumulate, so two backward calls without clearing leave
/// leaves with twice the derivative. Throws if the root is not a
/// single-element tensor.
template <typename T>
void backward(const Ptr<T>& root) {
    if (!root->value.is_scalar())
        throw ShapeError("backward: root must be scalar, got " +
                         shape_str(root->value.shape()));
    // Iterative post-order DFS; graphs can be deep at large layer counts.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node<T>* node : order)
        if (node->backprop) node->clear_grad();
    root->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backprop && node->has_grad()) node->backprop(*node);
    }
}

// ---------------------------------------------------------------------------
// finite-difference oracle
// ---------------------------------------------------------------------------

/// Central-difference gradient of a scalar-valued function, one coordinate at
/// a time. Serves as the independent check on every backward closure.
template <typename T>
Tensor<T> fd_gradient(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T step) {
    if (!std::isfinite(static_cast<double>(f(x))))
        throw NumericError("fd_gradient: f(x) is not finite");
    Tensor<T> g(x.shape());
    Tensor<T> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T saved = probe[i];
        probe[i] = saved + step;
        const T fp = f(probe);
        probe[i] = saved - step;
        const T fm = f(probe);
        probe[i] = saved;
        g[i] = (fp - fm) / (T(2) * step);
    }
    return g;
}

/// Worst relative deviation between the analytic gradient (reverse sweep of
/// `build`, which must map a leaf to a scalar node) and central differences.
/// Denominator: max(|analytic|, |numeric|, 1e-8).
template <typename T>
T fd_gradient_check(const std::function<Ptr<T>(const Ptr<T>&)>& build, const Tensor<T>& x,
                    T step) {
    Ptr<T> leaf = param(x, "fd_leaf");
    Ptr<T> root = build(leaf);
    backward(root);
    const Tensor<T>& analytic = leaf->ensure_grad();
    Tensor<T> numeric = fd_gradient<T>(
        [&build](const Tensor<T>& probe) {
            Ptr<T> l = constant(probe);
            return build(l)->value[0];
        },
        x, step);
    T worst(0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), T(1e-8)});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

}  // namespace lano::ad
