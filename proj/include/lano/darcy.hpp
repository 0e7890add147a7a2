#pragma once

#include <cstdint>
#include <string>

#include "lano/dataset.hpp"
#include "lano/tensor.hpp"

// Synthetic steady-diffusion benchmark: -div(a grad u) = f on the unit
// square, u = 0 on the boundary, a(x) a two-valued random medium. The
// finite-volume solver doubles as the independent oracle for the learned
// operator: harmonic-mean face transmissibilities on a node-centered uniform
// grid (boundary nodes included, interior unknowns only), solved by
// conjugate gradients.

namespace lano {

struct DarcyGenConfig {
    std::size_t n = 16;              // grid is n x n including boundary nodes
    std::size_t samples = 240;
    std::size_t train_samples = 200;
    double a_lo = 3.0;
    double a_hi = 12.0;
    double forcing = 1.0;            // f is constant for the benchmark
    std::uint64_t seed = 0;

    void validate() const {
        if (n < 8) throw ConfigError("darcy: grid size must be >= 8");
        if (a_lo <= 0 || a_hi <= 0) throw ConfigError("darcy: coefficients must be positive");
        if (samples == 0 || train_samples == 0 || train_samples >= samples)
            throw ConfigError("darcy: need 0 < train_samples < samples");
    }
};

/// Two-valued random permeability field [n x n]: uniform noise, separable box
/// blur of radius n/8, thresholded at its median into {a_lo, a_hi}.
Tensor<double> gen_coefficient(std::uint64_t seed, std::size_t n, double a_lo = 3.0,
                               double a_hi = 12.0);

/// Solves -div(a grad u) = f with homogeneous Dirichlet data. a and f are
/// node values on the n x n grid; the returned u has exact zeros on the
/// boundary ring. Throws NumericError for non-positive a or if CG fails to
/// reach residual 1e-10 within 10 n^2 iterations.
Tensor<double> solve_darcy_fd(const Tensor<double>& a, const Tensor<double>& f);

/// || A u - b ||_2 of the discrete system for a given solution field,
/// evaluated from scratch. Used to re-check generated samples.
double darcy_residual(const Tensor<double>& a, const Tensor<double>& f,
                      const Tensor<double>& u);

/// Bilinear resampling between node-centered uniform grids.
Tensor<double> resample_grid(const Tensor<double>& field, std::size_t target_rows,
                             std::size_t target_cols);

/// Per-channel bilinear resampling of a grid-flattened token field
/// [rows*cols x c] onto a new grid.
template <typename T>
Tensor<T> resample_tokens(const Tensor<T>& field, const GridShape& from, const GridShape& to) {
    check_grid(field, from, "resample_tokens");
    const std::size_t c = field.dim(1);
    Tensor<T> out({to.points(), c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        Tensor<double> plane({from.rows, from.cols});
        for (std::size_t i = 0; i < from.points(); ++i)
            plane[i] = static_cast<double>(field[i * c + ch]);
        Tensor<double> res = resample_grid(plane, to.rows, to.cols);
        for (std::size_t i = 0; i < to.points(); ++i)
            out[i * c + ch] = static_cast<T>(res[i]);
    }
    return out;
}

/// Row-major node coordinates of an r x c grid on the unit square: token
/// i*c + j maps to (j/(c-1), i/(r-1)).
Tensor<double> grid_coordinates(std::size_t rows, std::size_t cols);

/// Generates the full benchmark: coefficients, FD solutions, coordinates and
/// the manifest, written under out_dir. Deterministic in cfg.seed; sample
/// generation parallelizes across LANO_THREADS workers without changing the
/// bytes produced.
DatasetInfo gen_dataset(const DarcyGenConfig& cfg, const std::string& out_dir);

}  // namespace lano
