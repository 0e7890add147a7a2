#include "lano/darcy.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

#include "lano/rng.hpp"

namespace lano {

namespace {

// Harmonic-mean transmissibility between two node coefficients.
inline double face(double a1, double a2) { return 2.0 * a1 * a2 / (a1 + a2); }

// Matrix-free application of the finite-volume operator on the interior
// unknowns: y = A x. Grid is n x n including the Dirichlet ring, so there
// are (n-2)^2 unknowns; x and y are indexed over interior nodes row-major.
void apply_operator(const Tensor<double>& a, std::size_t n, const std::vector<double>& x,
                    std::vector<double>& y) {
    const std::size_t m = n - 2;
    auto xval = [&](std::size_t i, std::size_t j) -> double {
        // Interior neighbors only; the Dirichlet ring contributes zero.
        if (i == 0 || j == 0 || i > m || j > m) return 0.0;
        return x[(i - 1) * m + (j - 1)];
    };
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const double ac = a[i * n + j];
            const double tw = face(ac, a[i * n + j - 1]);
            const double te = face(ac, a[i * n + j + 1]);
            const double tn = face(ac, a[(i - 1) * n + j]);
            const double ts = face(ac, a[(i + 1) * n + j]);
            const double uc = xval(i, j);
            y[(i - 1) * m + (j - 1)] = tw * (uc - xval(i, j - 1)) + te * (uc - xval(i, j + 1)) +
                                       tn * (uc - xval(i - 1, j)) + ts * (uc - xval(i + 1, j));
        }
    }
}

void check_fields(const Tensor<double>& a, const Tensor<double>& f, const char* who) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1))
        throw ShapeError(std::string(who) + ": coefficient field must be square, got " +
                         shape_str(a.shape()));
    if (!f.same_shape(a))
        throw ShapeError(std::string(who) + ": forcing shape " + shape_str(f.shape()) +
                         " does not match coefficients " + shape_str(a.shape()));
    if (a.dim(0) < 3)
        throw ShapeError(std::string(who) + ": grid must be at least 3x3");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i] > 0.0))
            throw NumericError(std::string(who) + ": coefficient field must be positive "
                                                  "everywhere");
}

std::vector<double> rhs_vector(const Tensor<double>& f, std::size_t n) {
    const std::size_t m = n - 2;
    const double h = 1.0 / static_cast<double>(n - 1);
    std::vector<double> b(m * m);
    for (std::size_t i = 1; i <= m; ++i)
        for (std::size_t j = 1; j <= m; ++j) b[(i - 1) * m + (j - 1)] = f[i * n + j] * h * h;
    return b;
}

}  // namespace

Tensor<double> solve_darcy_fd(const Tensor<double>& a, const Tensor<double>& f) {
    check_fields(a, f, "solve_darcy_fd");
    const std::size_t n = a.dim(0);
    const std::size_t m = n - 2;
    const std::size_t unknowns = m * m;
    std::vector<double> b = rhs_vector(f, n);

    // Plain CG; the system is symmetric positive definite.
    std::vector<double> x(unknowns, 0.0), r = b, p = b, ap(unknowns);
    double bnorm = 0.0;
    for (double v : b) bnorm += v * v;
    bnorm = std::sqrt(bnorm);
    const double tol = 1e-10 * std::max(1.0, bnorm);
    const std::size_t max_iters = 10 * n * n;

    double rr = 0.0;
    for (double v : r) rr += v * v;
    std::size_t it = 0;
    while (std::sqrt(rr) > tol) {
        if (it++ >= max_iters)
            throw NumericError("solve_darcy_fd: CG did not reach residual " +
                               std::to_string(tol) + " within " + std::to_string(max_iters) +
                               " iterations");
        apply_operator(a, n, p, ap);
        double pap = 0.0;
        for (std::size_t i = 0; i < unknowns; ++i) pap += p[i] * ap[i];
        const double alpha = rr / pap;
        for (std::size_t i = 0; i < unknowns; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        double rr_new = 0.0;
        for (double v : r) rr_new += v * v;
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < unknowns; ++i) p[i] = r[i] + beta * p[i];
    }

    Tensor<double> u({n, n});
    for (std::size_t i = 1; i <= m; ++i)
        for (std::size_t j = 1; j <= m; ++j) u[i * n + j] = x[(i - 1) * m + (j - 1)];
    return u;
}

double darcy_residual(const Tensor<double>& a, const Tensor<double>& f,
                      const Tensor<double>& u) {
    check_fields(a, f, "darcy_residual");
    if (!u.same_shape(a))
        throw ShapeError("darcy_residual: solution shape " + shape_str(u.shape()) +
                         " does not match " + shape_str(a.shape()));
    const std::size_t n = a.dim(0);
    const std::size_t m = n - 2;
    std::vector<double> x(m * m), y(m * m);
    for (std::size_t i = 1; i <= m; ++i)
        for (std::size_t j = 1; j <= m; ++j) x[(i - 1) * m + (j - 1)] = u[i * n + j];
    apply_operator(a, n, x, y);
    std::vector<double> b = rhs_vector(f, n);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - b[i];
        acc += r * r;
    }
    return std::sqrt(acc);
}

Tensor<double> gen_coefficient(std::uint64_t seed, std::size_t n, double a_lo, double a_hi) {
    Rng rng = Rng(seed).split("coefficient");
    Tensor<double> noise({n, n});
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = rng.uniform();

    // Separable box blur with truncated windows at the boundary.
    const std::size_t radius = std::max<std::size_t>(1, n / 8);
    Tensor<double> tmp({n, n}), smooth({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t lo = j >= radius ? j - radius : 0;
            const std::size_t hi = std::min(n - 1, j + radius);
            double acc = 0.0;
            for (std::size_t k = lo; k <= hi; ++k) acc += noise[i * n + k];
            tmp[i * n + j] = acc / static_cast<double>(hi - lo + 1);
        }
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lo = i >= radius ? i - radius : 0;
            const std::size_t hi = std::min(n - 1, i + radius);
            double acc = 0.0;
            for (std::size_t k = lo; k <= hi; ++k) acc += tmp[k * n + j];
            smooth[i * n + j] = acc / static_cast<double>(hi - lo + 1);
        }

    std::vector<double> sorted(smooth.data(), smooth.data() + smooth.size());
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];

    Tensor<double> out({n, n});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = smooth[i] > median ? a_hi : a_lo;
    return out;
}

Tensor<double> resample_grid(const Tensor<double>& field, std::size_t target_rows,
                             std::size_t target_cols) {
    detail::require_rank2(field, "resample_grid");
    const std::size_t rows = field.dim(0), cols = field.dim(1);
    detail::require(rows >= 2 && cols >= 2 && target_rows >= 2 && target_cols >= 2,
                    "resample_grid: grids must be at least 2x2");
    if (rows == target_rows && cols == target_cols) return field;
    Tensor<double> out({target_rows, target_cols});
    const double si = static_cast<double>(rows - 1) / static_cast<double>(target_rows - 1);
    const double sj = static_cast<double>(cols - 1) / static_cast<double>(target_cols - 1);
    for (std::size_t i = 0; i < target_rows; ++i) {
        const double ti = si * static_cast<double>(i);
        std::size_t i0 = std::min(static_cast<std::size_t>(ti), rows - 2);
        const double wi = ti - static_cast<double>(i0);
        for (std::size_t j = 0; j < target_cols; ++j) {
            const double tj = sj * static_cast<double>(j);
            std::size_t j0 = std::min(static_cast<std::size_t>(tj), cols - 2);
            const double wj = tj - static_cast<double>(j0);
            const double f00 = field[i0 * cols + j0];
            const double f01 = field[i0 * cols + j0 + 1];
            const double f10 = field[(i0 + 1) * cols + j0];
            const double f11 = field[(i0 + 1) * cols + j0 + 1];
            out[i * target_cols + j] = (1 - wi) * ((1 - wj) * f00 + wj * f01) +
                                       wi * ((1 - wj) * f10 + wj * f11);
        }
    }
    return out;
}

Tensor<double> grid_coordinates(std::size_t rows, std::size_t cols) {
    Tensor<double> x({rows * cols, 2});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            x[(i * cols + j) * 2 + 0] = static_cast<double>(j) / static_cast<double>(cols - 1);
            x[(i * cols + j) * 2 + 1] = static_cast<double>(i) / static_cast<double>(rows - 1);
        }
    return x;
}

namespace {

std::size_t worker_count() {
    if (const char* env = std::getenv("LANO_THREADS")) {
        const long v = std::atol(env);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

}  // namespace

DatasetInfo gen_dataset(const DarcyGenConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const std::size_t n = cfg.n;
    const std::size_t points = n * n;

    Tensor<double> coords = grid_coordinates(n, n);
    Tensor<double> forcing = Tensor<double>::full({n, n}, cfg.forcing);

    // Every sample depends only on (seed, sample index), so the worker split
    // cannot change the generated bytes.
    std::vector<Tensor<double>> afields(cfg.samples), ufields(cfg.samples);
    Rng root(cfg.seed);
    std::vector<std::uint64_t> sample_seeds(cfg.samples);
    for (std::size_t s = 0; s < cfg.samples; ++s)
        sample_seeds[s] = root.split("data").split(s).next_u64();

    const std::size_t workers = std::min(worker_count(), cfg.samples);
    auto run = [&](std::size_t w) {
        for (std::size_t s = w; s < cfg.samples; s += workers) {
            afields[s] = gen_coefficient(sample_seeds[s], n, cfg.a_lo, cfg.a_hi);
            ufields[s] = solve_darcy_fd(afields[s], forcing);
        }
    };
    if (workers <= 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
        for (auto& t : pool) t.join();
    }

    Dataset<double> ds;
    ds.info.samples = cfg.samples;
    ds.info.train_samples = cfg.train_samples;
    ds.info.test_samples = cfg.samples - cfg.train_samples;
    ds.info.points = points;
    ds.info.d_x = 2;
    ds.info.d_a = 1;
    ds.info.d_u = 1;
    ds.info.grid = GridShape{n, n};
    ds.info.dtype = Dtype::f64;
    ds.info.train_x = "train_x.lt";
    ds.info.train_a = "train_a.lt";
    ds.info.train_u = "train_u.lt";
    ds.info.test_x = "test_x.lt";
    ds.info.test_a = "test_a.lt";
    ds.info.test_u = "test_u.lt";

    auto to_sample = [&](std::size_t s) {
        Sample<double> sample;
        sample.x = coords;
        sample.a = reshape(afields[s], {points, std::size_t(1)});
        sample.u = reshape(ufields[s], {points, std::size_t(1)});
        return sample;
    };
    for (std::size_t s = 0; s < cfg.train_samples; ++s) ds.train.push_back(to_sample(s));
    for (std::size_t s = cfg.train_samples; s < cfg.samples; ++s) ds.test.push_back(to_sample(s));

    save_dataset(ds, out_dir);
    return ds.info;
}

}  // namespace lano
