#pragma once

#include <cmath>
#include <optional>

#include "lano/autodiff.hpp"
#include "lano/grid.hpp"
#include "lano/tensor.hpp"

// Relative L2 over all entries of a field, the central-difference gradient
// loss on grid data, and their weighted sum. Graph forms differentiate
// w.r.t. the prediction; the reference field is a constant.

namespace lano {

template <typename T>
T l2_norm(const Tensor<T>& t) {
    double acc = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        acc += static_cast<double>(t[i]) * static_cast<double>(t[i]);
    return static_cast<T>(std::sqrt(acc));
}

/// || pred - truth ||_2 / || truth ||_2 over all entries of one sample.
template <typename T>
T relative_l2(const Tensor<T>& pred, const Tensor<T>& truth) {
    detail::require(pred.same_shape(truth), "relative_l2: shape mismatch " +
                                                shape_str(pred.shape()) + " vs " +
                                                shape_str(truth.shape()));
    const T denom = l2_norm(truth);
    if (denom <= T(0)) throw NumericError("relative_l2: reference field has zero norm");
    return l2_norm(sub(pred, truth)) / denom;
}

/// Relative L2 of the stacked spatial gradients of pred vs truth.
template <typename T>
T gradient_loss(const Tensor<T>& pred, const Tensor<T>& truth, const GridShape& grid) {
    return relative_l2(grid_diff(pred, grid), grid_diff(truth, grid));
}

/// relative_l2 + gamma * gradient_loss; gamma = 0 skips the gradient term
/// (and is the only valid setting without a grid).
template <typename T>
T total_loss(const Tensor<T>& pred, const Tensor<T>& truth, T gamma,
             const std::optional<GridShape>& grid) {
    T loss = relative_l2(pred, truth);
    if (gamma != T(0)) {
        if (!grid) throw ShapeError("total_loss: gradient term requires a grid shape");
        loss += gamma * gradient_loss(pred, truth, *grid);
    }
    return loss;
}

namespace ad {

template <typename T>
Ptr<T> grid_diff(const Ptr<T>& field, const GridShape& grid) {
    return detail::make_op<T>(
        lano::grid_diff(field->value, grid), "grid_diff", {field}, [field, grid](Node<T>& n) {
            const std::size_t rows = grid.rows, cols = grid.cols;
            const std::size_t c = field->value.dim(1);
            const T hx = T(1) / T(cols - 1);
            const T hy = T(1) / T(rows - 1);
            Tensor<T> g(field->value.shape());
            auto add_at = [&](std::size_t i, std::size_t j, std::size_t ch, T v) {
                g[(i * cols + j) * c + ch] += v;
            };
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < cols; ++j) {
                    const T* gout = n.grad.data() + (i * cols + j) * 2 * c;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const T gx = gout[ch];
                        if (j == 0) {
                            add_at(i, 1, ch, gx / hx);
                            add_at(i, 0, ch, -gx / hx);
                        } else if (j == cols - 1) {
                            add_at(i, cols - 1, ch, gx / hx);
                            add_at(i, cols - 2, ch, -gx / hx);
                        } else {
                            add_at(i, j + 1, ch, gx / (T(2) * hx));
                            add_at(i, j - 1, ch, -gx / (T(2) * hx));
                        }
                        const T gy = gout[c + ch];
                        if (i == 0) {
                            add_at(1, j, ch, gy / hy);
                            add_at(0, j, ch, -gy / hy);
                        } else if (i == rows - 1) {
                            add_at(rows - 1, j, ch, gy / hy);
                            add_at(rows - 2, j, ch, -gy / hy);
                        } else {
                            add_at(i + 1, j, ch, gy / (T(2) * hy));
                            add_at(i - 1, j, ch, -gy / (T(2) * hy));
                        }
                    }
                }
            }
            field->accumulate(g);
        });
}

/// Differentiable relative L2 against a constant reference.
template <typename T>
Ptr<T> relative_l2(const Ptr<T>& pred, const Tensor<T>& truth) {
    lano::detail::require(pred->value.same_shape(truth),
                          "relative_l2: shape mismatch " + shape_str(pred->value.shape()) +
                              " vs " + shape_str(truth.shape()));
    const T denom = l2_norm(truth);
    if (denom <= T(0)) throw NumericError("relative_l2: reference field has zero norm");
    Ptr<T> diff = sub(pred, constant(truth, "truth"));
    Ptr<T> norm = sqrt_elem(sum(mul(diff, diff)));
    return scale(norm, T(1) / denom);
}

template <typename T>
Ptr<T> total_loss(const Ptr<T>& pred, const Tensor<T>& truth, T gamma,
                  const std::optional<GridShape>& grid) {
    Ptr<T> loss = relative_l2(pred, truth);
    if (gamma != T(0)) {
        if (!grid) throw ShapeError("total_loss: gradient term requires a grid shape");
        Ptr<T> dp = grid_diff(pred, *grid);
        Tensor<T> dt = lano::grid_diff(truth, *grid);
        loss = add(loss, scale(relative_l2(dp, dt), gamma));
    }
    return loss;
}

}  // namespace ad
}  // namespace lano
