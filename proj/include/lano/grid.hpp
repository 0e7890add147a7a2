#pragma once

#include <cstddef>
#include <optional>

#include "lano/tensor.hpp"

namespace lano {

/// Row-major grid attached to a token axis: token n = i * cols + j.
struct GridShape {
    std::size_t rows = 0;  // H_g
    std::size_t cols = 0;  // W_g
    std::size_t points() const { return rows * cols; }
    bool operator==(const GridShape&) const = default;
};

template <typename T>
void check_grid(const Tensor<T>& field, const GridShape& grid, const char* who) {
    detail::require_rank2(field, who);
    if (grid.points() != field.dim(0))
        throw ShapeError(std::string(who) + ": grid " + std::to_string(grid.rows) + "x" +
                         std::to_string(grid.cols) + " does not cover " +
                         std::to_string(field.dim(0)) + " tokens");
}

/// Per-channel 3x3 convolution with zero padding over the grid-reshaped
/// field, plus per-channel bias. weights: [d x 3 x 3], bias: [d].
template <typename T>
Tensor<T> dwc_apply(const Tensor<T>& v, const GridShape& grid, const Tensor<T>& weights,
                    const Tensor<T>& bias) {
    check_grid(v, grid, "dwc_apply");
    const std::size_t d = v.dim(1);
    detail::require(weights.rank() == 3 && weights.dim(0) == d && weights.dim(1) == 3 &&
                        weights.dim(2) == 3,
                    "dwc_apply: weights shape " + shape_str(weights.shape()) +
                        " (want [" + std::to_string(d) + "x3x3])");
    detail::require(bias.rank() == 1 && bias.dim(0) == d,
                    "dwc_apply: bias shape " + shape_str(bias.shape()));
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(grid.rows);
    const std::ptrdiff_t cols = static_cast<std::ptrdiff_t>(grid.cols);
    Tensor<T> out(v.shape());
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        for (std::ptrdiff_t j = 0; j < cols; ++j) {
            T* dst = out.data() + (i * cols + j) * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] = bias[c];
            for (int u = -1; u <= 1; ++u) {
                const std::ptrdiff_t ii = i + u;
                if (ii < 0 || ii >= rows) continue;
                for (int w = -1; w <= 1; ++w) {
                    const std::ptrdiff_t jj = j + w;
                    if (jj < 0 || jj >= cols) continue;
                    const T* src = v.data() + (ii * cols + jj) * d;
                    const std::size_t k = static_cast<std::size_t>((u + 1) * 3 + (w + 1));
                    for (std::size_t c = 0; c < d; ++c) dst[c] += weights[c * 9 + k] * src[c];
                }
            }
        }
    }
    return out;
}

/// Central-difference spatial gradients of a grid field, one-sided at the
/// boundary, unit-square node spacing. Output stacks [d/dx, d/dy] along the
/// channel axis: [N x c] -> [N x 2c].
template <typename T>
Tensor<T> grid_diff(const Tensor<T>& field, const GridShape& grid) {
    check_grid(field, grid, "grid_diff");
    detail::require(grid.rows >= 2 && grid.cols >= 2,
                    "grid_diff: grid must be at least 2x2");
    const std::size_t rows = grid.rows, cols = grid.cols, c = field.dim(1);
    const T hx = T(1) / T(cols - 1);
    const T hy = T(1) / T(rows - 1);
    Tensor<T> out({field.dim(0), 2 * c});
    auto f = [&](std::size_t i, std::size_t j, std::size_t ch) {
        return field[(i * cols + j) * c + ch];
    };
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            T* dst = out.data() + (i * cols + j) * 2 * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
                T dx;
                if (j == 0)
                    dx = (f(i, 1, ch) - f(i, 0, ch)) / hx;
                else if (j == cols - 1)
                    dx = (f(i, cols - 1, ch) - f(i, cols - 2, ch)) / hx;
                else
                    dx = (f(i, j + 1, ch) - f(i, j - 1, ch)) / (T(2) * hx);
                T dy;
                if (i == 0)
                    dy = (f(1, j, ch) - f(0, j, ch)) / hy;
                else if (i == rows - 1)
                    dy = (f(rows - 1, j, ch) - f(rows - 2, j, ch)) / hy;
                else
                    dy = (f(i + 1, j, ch) - f(i - 1, j, ch)) / (T(2) * hy);
                dst[ch] = dx;
                dst[c + ch] = dy;
            }
        }
    }
    return out;
}

}  // namespace lano
