#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "lano/losses.hpp"
#include "lano/model.hpp"
#include "lano/rng.hpp"

// The finite-difference gradient suite: every differentiable op against the
// central-difference oracle, then every parameter of a tiny end-to-end model
// (L=2, d=8, H=2, M=2, N=6), in 64-bit. Each coordinate is checked at a few
// steps and the best-conditioned result kept; near-zero-gradient coordinates
// otherwise read as pure oracle noise against the 1e-8 denominator floor.

namespace lano {

struct GradCheckEntry {
    std::string name;
    double worst = 0;
};

namespace detail {

/// Worst over coordinates of the best-conditioned deviation across fd steps.
/// The per-coordinate minimum matters: large-|f'''| coordinates need a small
/// step while zero-gradient coordinates need a large one, and no single step
/// serves both.
inline double fd_suite_best(const std::function<ad::Ptr<double>(const ad::Ptr<double>&)>& build,
                            const Tensor<double>& x) {
    ad::Ptr<double> leaf = ad::param(x, "fd_leaf");
    ad::backward(build(leaf));
    const Tensor<double>& analytic = leaf->ensure_grad();
    auto value_of = [&build](const Tensor<double>& probe) {
        return build(ad::constant(probe))->value[0];
    };
    std::vector<Tensor<double>> fds;
    for (double h : {1e-5, 1e-4, 1e-3, 1e-2})
        fds.push_back(ad::fd_gradient<double>(value_of, x, h));
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double best = 1e300;
        for (const auto& fd : fds) {
            const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-8});
            best = std::min(best, std::abs(analytic[i] - fd[i]) / denom);
        }
        worst = std::max(worst, best);
    }
    return worst;
}

inline Tensor<double> gc_random(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace detail

/// Runs the whole suite; returns per-entry worst relative errors. Entries
/// cover 5 random seeds each for the ops and every parameter tensor of the
/// tiny model.
inline std::vector<GradCheckEntry> gradient_check_suite(std::ostream* log = nullptr) {
    namespace gd = detail;
    std::vector<GradCheckEntry> entries;
    Rng seeds(424242);

    using Build = std::function<ad::Ptr<double>(const ad::Ptr<double>&)>;
    struct OpCase {
        const char* name;
        Shape shape;
        Build build;
        double lo = -1, hi = 1;
    };
    const GridShape grid{4, 5};
    const std::vector<OpCase> cases = {
        {"add_mul", {4, 3},
         [](const ad::Ptr<double>& x) { return ad::sum(ad::add(x, ad::mul(x, x))); }},
        {"sub_scale", {4, 3},
         [](const ad::Ptr<double>& x) {
             return ad::sum(ad::sub(ad::scale(x, 3.0), ad::mul(x, x)));
         }},
        {"relu", {5, 5},
         [](const ad::Ptr<double>& x) { return ad::sum(ad::mul(ad::relu(x), x)); }},
        {"gelu", {5, 5},
         [](const ad::Ptr<double>& x) { return ad::sum(ad::mul(ad::gelu(x), x)); }},
        {"sqrt", {4, 4},
         [](const ad::Ptr<double>& x) { return ad::sum(ad::sqrt_elem(x)); }, 0.5, 2.0},
        {"matmul", {4, 4},
         [](const ad::Ptr<double>& x) { return ad::sum(ad::mul(ad::matmul(x, x), x)); }},
        {"transpose_reshape", {3, 6},
         [](const ad::Ptr<double>& x) {
             auto t = ad::reshape(ad::transpose(x), {2, 9});
             return ad::sum(ad::mul(t, t));
         }},
        {"slice_concat", {4, 6},
         [](const ad::Ptr<double>& x) {
             auto g = ad::concat(1, ad::slice(x, 1, 2, 4), ad::slice(x, 1, 0, 2));
             return ad::sum(ad::mul(g, g));
         }},
        {"softmax_rows", {4, 7},
         [](const ad::Ptr<double>& x) {
             auto s = ad::softmax_rows(x);
             return ad::sum(ad::mul(s, ad::slice(ad::concat(1, x, x), 1, 0, 7)));
         }},
        {"mean_over_axis", {6, 3},
         [](const ad::Ptr<double>& x) {
             auto m0 = ad::mean_over_axis(x, 0);
             auto m1 = ad::mean_over_axis(x, 1);
             return ad::add(ad::sum(ad::mul(m0, m0)), ad::sum(ad::mul(m1, m1)));
         }},
        {"broadcast_add", {4, 3},
         [](const ad::Ptr<double>& x) {
             auto y = ad::broadcast_add(ad::mul(x, x), ad::mean_over_axis(x, 0));
             return ad::sum(ad::mul(y, y));
         }},
        {"layer_norm", {5, 6},
         [](const ad::Ptr<double>& x) {
             auto y = ad::layer_norm(x, ad::constant(Tensor<double>::full({6}, 1.3)),
                                     ad::constant(Tensor<double>::full({6}, -0.2)), 1e-5);
             return ad::sum(ad::mul(y, y));
         }},
        {"agent_pool", {7, 4},
         [](const ad::Ptr<double>& x) {
             auto a = ad::agent_pool(x, 3);
             return ad::sum(ad::mul(a, a));
         }},
        {"linear_resample", {2, 5},
         [](const ad::Ptr<double>& x) {
             auto r = ad::linear_resample_cols(x, 9);
             return ad::sum(ad::mul(r, r));
         }},
        {"grid_diff", {20, 2},
         [grid](const ad::Ptr<double>& x) {
             auto d = ad::grid_diff(x, grid);
             return ad::sum(ad::mul(d, d));
         }},
        {"dwc_weights", {2 * 9},
         [grid](const ad::Ptr<double>& w) {
             Rng r(7);
             auto v = ad::constant(gd::gc_random(r, {20, 2}));
             auto y = ad::dwc_apply(v, grid, ad::reshape(w, {2, 3, 3}),
                                    ad::constant(Tensor<double>({2})));
             return ad::sum(ad::mul(y, y));
         }},
        {"relative_l2_grid", {20, 1},
         [grid](const ad::Ptr<double>& pred) {
             Rng r(9);
             return ad::total_loss(pred, gd::gc_random(r, {20, 1}), 0.1,
                                   std::optional<GridShape>{grid});
         }},
    };

    for (const auto& c : cases) {
        GradCheckEntry entry{c.name, 0};
        for (int seed = 0; seed < 5; ++seed) {
            Rng rng = seeds.split(c.name).split(seed);
            auto x = gd::gc_random(rng, c.shape, c.lo, c.hi);
            entry.worst = std::max(entry.worst, gd::fd_suite_best(c.build, x));
        }
        if (log) (*log) << "op " << entry.name << ": " << entry.worst << "\n";
        entries.push_back(entry);
    }

    // end-to-end tiny model
    LanoConfig cfg;
    cfg.d_x = 2;
    cfg.d_a = 1;
    cfg.d_u = 1;
    cfg.L = 2;
    cfg.H = 2;
    cfg.d_model = 8;
    cfg.M = 2;
    cfg.bias_base_len = 4;
    auto model = LanoModel<double>::init(cfg, 20240);
    Rng rng(20241);
    auto x = gd::gc_random(rng, {6, 2});
    auto a = gd::gc_random(rng, {6, 1});
    auto u = gd::gc_random(rng, {6, 1});
    const GridShape tiny_grid{2, 3};
    auto loss = [&]() {
        auto pred = model.forward_graph(x, a, tiny_grid);
        return ad::total_loss(pred, u, 0.1, std::optional<GridShape>{tiny_grid});
    };
    for (const auto& [name, target] : model.parameters()) {
        model.zero_grad();
        ad::backward(loss());
        Tensor<double> analytic =
            target->has_grad() ? target->grad : Tensor<double>(target->value.shape());
        std::vector<Tensor<double>> fds;
        for (double h : {1e-5, 1e-4, 1e-3, 1e-2})
            fds.push_back(ad::fd_gradient<double>(
                [&](const Tensor<double>& probe) {
                    Tensor<double> saved = target->value;
                    target->value = probe;
                    const double v = loss()->value[0];
                    target->value = saved;
                    return v;
                },
                target->value, h));
        double worst = 0;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            double best = 1e300;
            for (const auto& fd : fds) {
                const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-8});
                best = std::min(best, std::abs(analytic[i] - fd[i]) / denom);
            }
            worst = std::max(worst, best);
        }
        if (log) (*log) << "model " << name << ": " << worst << "\n";
        entries.push_back({"model." + name, worst});
    }
    return entries;
}

inline double gradient_check_worst(std::ostream* log = nullptr) {
    double worst = 0;
    for (const auto& e : gradient_check_suite(log)) worst = std::max(worst, e.worst);
    return worst;
}

}  // namespace lano
