#include <doctest.h>

#include <cmath>
#include <vector>

#include "lano/attention.hpp"
#include "lano/rng.hpp"

namespace ad = lano::ad;
using lano::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(lano::Rng& rng, lano::Shape shape, double lo = -1, double hi = 1) {
    Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// Brute-force scalar-loop softmax attention, kept deliberately independent of
// the library kernels.
Tensor<double> naive_softmax_attention(const Tensor<double>& q, const Tensor<double>& k,
                                       const Tensor<double>& v, double scale) {
    const std::size_t n = q.dim(0), d = q.dim(1), dv = v.dim(1);
    Tensor<double> out({n, dv});
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(k.dim(0));
        double mx = -1e300;
        for (std::size_t j = 0; j < k.dim(0); ++j) {
            double s = 0;
            for (std::size_t c = 0; c < d; ++c) s += q[i * d + c] * k[j * d + c];
            row[j] = s * scale;
            mx = std::max(mx, row[j]);
        }
        double denom = 0;
        for (double& r : row) {
            r = std::exp(r - mx);
            denom += r;
        }
        for (std::size_t j = 0; j < row.size(); ++j)
            for (std::size_t c = 0; c < dv; ++c)
                out[i * dv + c] += (row[j] / denom) * v[j * dv + c];
    }
    return out;
}

// Dense composed-product oracle for the two-stage factorization: compute the
// N x N mixing matrix softmax(QA^T s + B2) softmax(AK^T s + B1) explicitly,
// then apply it to V.
Tensor<double> dense_agent_oracle(const Tensor<double>& q, const Tensor<double>& k,
                                  const Tensor<double>& v, const Tensor<double>& a,
                                  const Tensor<double>& b1, const Tensor<double>& b2,
                                  double scale) {
    const std::size_t n = q.dim(0), m = a.dim(0);
    auto softmax_mat = [](Tensor<double> s) {
        const std::size_t rows = s.dim(0), cols = s.dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
            double mx = -1e300;
            for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, s[r * cols + c]);
            double denom = 0;
            for (std::size_t c = 0; c < cols; ++c) {
                s[r * cols + c] = std::exp(s[r * cols + c] - mx);
                denom += s[r * cols + c];
            }
            for (std::size_t c = 0; c < cols; ++c) s[r * cols + c] /= denom;
        }
        return s;
    };
    const std::size_t d = q.dim(1);
    Tensor<double> s1({m, n}), s2({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0;
            for (std::size_t c = 0; c < d; ++c) acc += a[i * d + c] * k[j * d + c];
            s1[i * n + j] = acc * scale + (b1.size() ? b1[i * n + j] : 0.0);
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0;
            for (std::size_t c = 0; c < d; ++c) acc += q[i * d + c] * a[j * d + c];
            s2[i * m + j] = acc * scale + (b2.size() ? b2[i * m + j] : 0.0);
        }
    Tensor<double> p1 = softmax_mat(s1), p2 = softmax_mat(s2);
    // Dense N x N mixing matrix, applied left-to-right.
    Tensor<double> mix({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0;
            for (std::size_t t = 0; t < m; ++t) acc += p2[i * m + t] * p1[t * n + j];
            mix[i * n + j] = acc;
        }
    const std::size_t dv = v.dim(1);
    Tensor<double> out({n, dv});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < dv; ++c)
                out[i * dv + c] += mix[i * n + j] * v[j * dv + c];
    return out;
}

lano::AgentAttentionParams<double> random_params(lano::Rng& rng,
                                                 const lano::AgentAttentionConfig& cfg,
                                                 bool bias, bool dwc) {
    lano::AgentAttentionParams<double> p;
    const std::size_t d = cfg.d_model;
    p.w_q = random_tensor<double>(rng, {d, d});
    p.w_k = random_tensor<double>(rng, {d, d});
    p.w_v = random_tensor<double>(rng, {d, d});
    p.w_o = random_tensor<double>(rng, {d, d});
    if (bias)
        p.bias = {random_tensor<double>(rng, {cfg.heads, cfg.agents}),
                  random_tensor<double>(rng, {cfg.heads, cfg.bias_base_len}),
                  random_tensor<double>(rng, {cfg.heads, cfg.bias_base_len}),
                  random_tensor<double>(rng, {cfg.heads, cfg.agents})};
    if (dwc)
        p.dwc = {random_tensor<double>(rng, {d, 3, 3}), random_tensor<double>(rng, {d})};
    return p;
}

}  // namespace

TEST_CASE("softmax attention: single row returns V") {
    lano::Rng rng(1);
    auto q = random_tensor<double>(rng, {1, 3});
    auto k = random_tensor<double>(rng, {1, 3});
    auto v = random_tensor<double>(rng, {1, 3});
    auto out = lano::softmax_attention(q, k, v, 0.5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(v[i]));
}

TEST_CASE("softmax attention: zero scores mix to the column mean of V") {
    lano::Rng rng(2);
    auto v = random_tensor<double>(rng, {5, 4});
    auto zero = Tensor<double>({5, 4});
    auto out = lano::softmax_attention(zero, zero, v, 1.0);
    auto mean = lano::mean_over_axis(v, 0);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(out[i * 4 + c] == doctest::Approx(mean[c]).epsilon(1e-9));
}

TEST_CASE("softmax attention matches two-loop oracle on random instances") {
    lano::Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        auto q = random_tensor<double>(rng, {3, 2});
        auto k = random_tensor<double>(rng, {3, 2});
        auto v = random_tensor<double>(rng, {3, 2});
        auto got = lano::softmax_attention(q, k, v, 1.0 / std::sqrt(2.0));
        auto want = naive_softmax_attention(q, k, v, 1.0 / std::sqrt(2.0));
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
    }
}

TEST_CASE("linear attention: identity map, all-ones input of length N") {
    const std::size_t n = 7;
    auto ones = Tensor<double>::ones({n, 1});
    auto out = lano::linear_attention(ones, ones, ones, lano::LinearFeatureMap::identity);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(double(n)));
}

TEST_CASE("linear attention association order agrees with dense oracle") {
    lano::Rng rng(4);
    auto q = random_tensor<double>(rng, {4, 2});
    auto k = random_tensor<double>(rng, {4, 2});
    auto v = random_tensor<double>(rng, {4, 2});
    auto right = lano::linear_attention(q, k, v);

    // left-to-right: (phi(Q) phi(K)^T) V computed with scalar loops
    auto fq = lano::feature_map(lano::LinearFeatureMap::elu_plus_one, q);
    auto fk = lano::feature_map(lano::LinearFeatureMap::elu_plus_one, k);
    Tensor<double> qk({4, 4});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t c = 0; c < 2; ++c) qk[i * 4 + j] += fq[i * 2 + c] * fk[j * 2 + c];
    Tensor<double> want({4, 2});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t c = 0; c < 2; ++c) want[i * 2 + c] += qk[i * 4 + j] * v[j * 2 + c];

    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(right[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("agent_pool trivial and hand cases") {
    lano::Rng rng(5);
    auto q = random_tensor<double>(rng, {4, 3});

    auto same = lano::agent_pool(q, 4);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(same[i] == q[i]);

    auto one = lano::agent_pool(q, 1);
    auto mean = lano::mean_over_axis(q, 0);
    for (std::size_t c = 0; c < 3; ++c) CHECK(one[c] == doctest::Approx(mean[c]));

    auto two = lano::agent_pool(q, 2);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(two[c] == doctest::Approx((q[c] + q[3 + c]) / 2));
        CHECK(two[3 + c] == doctest::Approx((q[6 + c] + q[9 + c]) / 2));
    }

    CHECK_THROWS_AS(lano::agent_pool(q, 5), lano::ShapeError);
}

TEST_CASE("agent_pool ragged segments: first N mod M segments one longer") {
    Tensor<double> q({5, 1}, {1, 2, 3, 4, 5});
    auto pooled = lano::agent_pool(q, 2);  // segments {1,2,3} and {4,5}
    CHECK(pooled[0] == doctest::Approx(2.0));
    CHECK(pooled[1] == doctest::Approx(4.5));
}

TEST_CASE("build_biases identity, zeros and interpolation oracle") {
    lano::AgentBias<double> bias = lano::AgentBias<double>::zeros(2, 3, 4);
    auto [b1z, b2z] = lano::build_biases(bias, 6);
    for (std::size_t i = 0; i < b1z.size(); ++i) CHECK(b1z[i] == 0.0);
    for (std::size_t i = 0; i < b2z.size(); ++i) CHECK(b2z[i] == 0.0);

    // base length N0 = 2 with values [0, 1] resampled to N = 3 -> [0, 0.5, 1]
    lano::AgentBias<double> lin = lano::AgentBias<double>::zeros(1, 1, 2);
    lin.v1_base[1] = 1.0;
    auto [b1, b2] = lano::build_biases(lin, 3);
    CHECK(b1[0] == doctest::Approx(0.0));
    CHECK(b1[1] == doctest::Approx(0.5));
    CHECK(b1[2] == doctest::Approx(1.0));
    for (std::size_t i = 0; i < b2.size(); ++i) CHECK(b2[i] == 0.0);

    // N == N0 keeps the base intact and composes with u1/v2
    lano::Rng rng(6);
    lano::AgentBias<double> full{random_tensor<double>(rng, {2, 3}),
                                 random_tensor<double>(rng, {2, 4}),
                                 random_tensor<double>(rng, {2, 4}),
                                 random_tensor<double>(rng, {2, 3})};
    auto [b1f, b2f] = lano::build_biases(full, 4);
    REQUIRE(b1f.shape() == lano::Shape{2, 3, 4});
    REQUIRE(b2f.shape() == lano::Shape{2, 4, 3});
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t m = 0; m < 3; ++m)
            for (std::size_t n = 0; n < 4; ++n) {
                CHECK(b1f[(h * 3 + m) * 4 + n] ==
                      doctest::Approx(full.u1[h * 3 + m] + full.v1_base[h * 4 + n]));
                CHECK(b2f[(h * 4 + n) * 3 + m] ==
                      doctest::Approx(full.u2_base[h * 4 + n] + full.v2[h * 3 + m]));
            }
}

TEST_CASE("dwc: identity stencil, averaging stencil corner, constant bias") {
    lano::Rng rng(7);
    lano::GridShape grid{3, 4};
    auto v = random_tensor<double>(rng, {12, 2});

    auto ident = lano::DwcKernel<double>::identity(2);
    auto out = lano::dwc_apply(v, grid, ident.weights, ident.bias);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(out[i] == doctest::Approx(v[i]));

    // constant field, 1/9 averaging stencil: corner keeps 4/9 of the value
    auto cfield = Tensor<double>::full({12, 1}, 3.0);
    Tensor<double> avg({1, 3, 3});
    for (int i = 0; i < 9; ++i) avg[i] = 1.0 / 9.0;
    auto smoothed = lano::dwc_apply(cfield, grid, avg, Tensor<double>({1}));
    CHECK(smoothed[0] == doctest::Approx(3.0 * 4.0 / 9.0));  // corner
    CHECK(smoothed[1] == doctest::Approx(3.0 * 6.0 / 9.0));  // edge
    CHECK(smoothed[5] == doctest::Approx(3.0));              // interior

    auto zeroed = lano::dwc_apply(v, grid, Tensor<double>({2, 3, 3}),
                                  Tensor<double>({2}, {1.5, -2.0}));
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(zeroed[i * 2] == doctest::Approx(1.5));
        CHECK(zeroed[i * 2 + 1] == doctest::Approx(-2.0));
    }

    CHECK_THROWS_AS(lano::dwc_apply(v, lano::GridShape{5, 5}, ident.weights, ident.bias),
                    lano::ShapeError);
}

TEST_CASE("factorization identity: two-stage equals composed dense product") {
    lano::Rng seeds(2025);
    for (int seed = 0; seed < 10; ++seed) {
        lano::Rng rng = seeds.split(seed);
        const std::size_t n = 5 + seed, m = 2 + seed % 3, d = 4;
        auto q = random_tensor<double>(rng, {n, d});
        auto k = random_tensor<double>(rng, {n, d});
        auto v = random_tensor<double>(rng, {n, d});
        auto a = random_tensor<double>(rng, {m, d});
        auto b1 = random_tensor<double>(rng, {m, n});
        auto b2 = random_tensor<double>(rng, {n, m});
        const double scale = 1.0 / std::sqrt(double(d));
        auto two_stage = lano::agent_attention_core(q, k, v, a, b1, b2, scale);
        auto dense = dense_agent_oracle(q, k, v, a, b1, b2, scale);
        for (std::size_t i = 0; i < two_stage.size(); ++i)
            CHECK(two_stage[i] == doctest::Approx(dense[i]).epsilon(1e-10));
    }
}

TEST_CASE("factorization identity holds in f32 within 1e-5") {
    lano::Rng rng(77);
    const std::size_t n = 16, m = 4, d = 8;
    auto q = random_tensor<float>(rng, {n, d});
    auto k = random_tensor<float>(rng, {n, d});
    auto v = random_tensor<float>(rng, {n, d});
    auto a = random_tensor<float>(rng, {m, d});
    const float scale = 1.0f / std::sqrt(float(d));
    auto two_stage =
        lano::agent_attention_core(q, k, v, a, Tensor<float>(), Tensor<float>(), scale);
    auto dense = dense_agent_oracle(q.cast<double>(), k.cast<double>(), v.cast<double>(),
                                    a.cast<double>(), Tensor<double>(), Tensor<double>(),
                                    double(scale));
    for (std::size_t i = 0; i < two_stage.size(); ++i)
        CHECK(double(two_stage[i]) == doctest::Approx(dense[i]).epsilon(1e-5));
}

TEST_CASE("full agent attention equals per-head dense oracle (multi-head, biased)") {
    lano::Rng seeds(31);
    for (int seed = 0; seed < 3; ++seed) {
        lano::Rng rng = seeds.split(seed);
        lano::AgentAttentionConfig cfg{8, 2, 3, 4, false};
        const std::size_t n = 9, dh = cfg.head_dim();
        auto f = random_tensor<double>(rng, {n, cfg.d_model});
        auto params = random_params(rng, cfg, true, false);
        auto got = lano::agent_attention(f, cfg, params);

        auto q = lano::matmul(f, params.w_q);
        auto k = lano::matmul(f, params.w_k);
        auto v = lano::matmul(f, params.w_v);
        auto [b1, b2] = lano::build_biases(params.bias, n);
        std::vector<Tensor<double>> heads;
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            auto qh = lano::slice(q, 1, h * dh, dh);
            auto kh = lano::slice(k, 1, h * dh, dh);
            auto vh = lano::slice(v, 1, h * dh, dh);
            auto a = lano::agent_pool(qh, cfg.agents);
            auto b1h = lano::reshape(lano::slice(b1, 0, h, 1), {cfg.agents, n});
            auto b2h = lano::reshape(lano::slice(b2, 0, h, 1), {n, cfg.agents});
            heads.push_back(dense_agent_oracle(qh, kh, vh, a, b1h, b2h, cfg.scale()));
        }
        std::vector<const Tensor<double>*> parts;
        for (const auto& hmat : heads) parts.push_back(&hmat);
        auto want = lano::matmul(lano::concat(1, parts), params.w_o);
        REQUIRE(got.same_shape(want));
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
    }
}

TEST_CASE("uniform reduction: zero projections and biases give W_o column-mean of V") {
    lano::Rng rng(41);
    lano::AgentAttentionConfig cfg{6, 2, 2, 4, false};
    const std::size_t n = 8;
    auto f = random_tensor<double>(rng, {n, cfg.d_model});
    auto params = random_params(rng, cfg, true, false);
    params.w_q = Tensor<double>({6, 6});
    params.w_k = Tensor<double>({6, 6});
    params.bias = lano::AgentBias<double>::zeros(cfg.heads, cfg.agents, cfg.bias_base_len);
    auto got = lano::agent_attention(f, cfg, params);

    auto v = lano::matmul(f, params.w_v);
    auto vbar = lano::mean_over_axis(v, 0);
    auto want = lano::matmul(lano::reshape(vbar, {1, cfg.d_model}), params.w_o);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cfg.d_model; ++c)
            CHECK(got[i * cfg.d_model + c] == doctest::Approx(want[c]).epsilon(1e-6));
}

TEST_CASE("uniform reduction with row-constant biases") {
    // Constant v1_base/u2_base keep both score matrices row-constant, so the
    // mixing stays the plain average regardless of u1/v2.
    lano::Rng rng(43);
    lano::AgentAttentionConfig cfg{4, 1, 3, 5, false};
    const std::size_t n = 7;
    auto f = random_tensor<double>(rng, {n, cfg.d_model});
    auto params = random_params(rng, cfg, true, false);
    params.w_q = Tensor<double>({4, 4});
    params.w_k = Tensor<double>({4, 4});
    params.bias.v1_base = Tensor<double>::full({1, 5}, 0.7);
    params.bias.u2_base = Tensor<double>::full({1, 5}, -1.2);
    auto got = lano::agent_attention(f, cfg, params);

    auto v = lano::matmul(f, params.w_v);
    auto vbar = lano::mean_over_axis(v, 0);
    auto want = lano::matmul(lano::reshape(vbar, {1, cfg.d_model}), params.w_o);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cfg.d_model; ++c)
            CHECK(got[i * cfg.d_model + c] == doctest::Approx(want[c]).epsilon(1e-6));
}

TEST_CASE("N=1, M=1 with zero biases returns the W_o-projected V row") {
    lano::Rng rng(47);
    lano::AgentAttentionConfig cfg{4, 2, 1, 4, false};
    auto f = random_tensor<double>(rng, {1, 4});
    auto params = random_params(rng, cfg, false, false);
    auto got = lano::agent_attention(f, cfg, params);
    auto want = lano::matmul(lano::matmul(f, params.w_v), params.w_o);
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
}

TEST_CASE("agent attention rejects N < M and grid mismatch") {
    lano::Rng rng(53);
    lano::AgentAttentionConfig cfg{4, 1, 8, 4, true};
    auto f = random_tensor<double>(rng, {4, 4});
    auto params = random_params(rng, cfg, false, true);
    CHECK_THROWS_AS(lano::agent_attention(f, cfg, params), lano::ShapeError);

    lano::AgentAttentionConfig cfg2{4, 1, 2, 4, true};
    CHECK_THROWS_AS(lano::agent_attention(f, cfg2, params, lano::GridShape{3, 3}),
                    lano::ShapeError);
}

TEST_CASE("permutation equivariance with fixed agents, no bias, no dwc") {
    lano::Rng rng(59);
    const std::size_t n = 6, m = 2, d = 3;
    auto q = random_tensor<double>(rng, {n, d});
    auto k = random_tensor<double>(rng, {n, d});
    auto v = random_tensor<double>(rng, {n, d});
    auto a = random_tensor<double>(rng, {m, d});
    const double scale = 1.0 / std::sqrt(double(d));
    auto base =
        lano::agent_attention_core(q, k, v, a, Tensor<double>(), Tensor<double>(), scale);

    const std::size_t perm[n] = {3, 0, 5, 1, 4, 2};
    Tensor<double> qp({n, d}), kp({n, d}), vp({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
            qp[i * d + c] = q[perm[i] * d + c];
            kp[i * d + c] = k[perm[i] * d + c];
            vp[i * d + c] = v[perm[i] * d + c];
        }
    auto permuted =
        lano::agent_attention_core(qp, kp, vp, a, Tensor<double>(), Tensor<double>(), scale);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c)
            CHECK(permuted[i * d + c] ==
                  doctest::Approx(base[perm[i] * d + c]).epsilon(1e-6));
}

TEST_CASE("internal softmax stages are row-stochastic") {
    lano::Rng rng(61);
    const std::size_t n = 10, m = 3, d = 4;
    auto q = random_tensor<float>(rng, {n, d});
    auto k = random_tensor<float>(rng, {n, d});
    auto a = random_tensor<float>(rng, {m, d});
    auto s1 = lano::softmax_rows(lano::scale(lano::matmul_nt(a, k), 0.5f));
    auto s2 = lano::softmax_rows(lano::scale(lano::matmul_nt(q, a), 0.5f));
    for (std::size_t r = 0; r < m; ++r) {
        float acc = 0;
        for (std::size_t c = 0; c < n; ++c) acc += s1[r * n + c];
        CHECK(acc == doctest::Approx(1.0f).epsilon(1e-6));
    }
    for (std::size_t r = 0; r < n; ++r) {
        float acc = 0;
        for (std::size_t c = 0; c < m; ++c) acc += s2[r * m + c];
        CHECK(acc == doctest::Approx(1.0f).epsilon(1e-6));
    }
}

TEST_CASE("flop_count closed forms") {
    using lano::AttentionVariant;
    auto agent = lano::flop_count(AttentionVariant::agent, 1000, 64, 128, 8);
    CHECK(agent.dominant == 4ull * 1000 * 64 * 128);
    CHECK(agent.dominant == 32768000ull);

    auto soft = lano::flop_count(AttentionVariant::softmax, 1000, 0, 128, 8);
    CHECK(soft.dominant == 2ull * 1000 * 1000 * 128);
    CHECK(soft.dominant == 256000000ull);

    // agent with M = N: dominant work is twice the softmax total
    auto agent_full = lano::flop_count(AttentionVariant::agent, 512, 512, 64, 4);
    auto soft_same = lano::flop_count(AttentionVariant::softmax, 512, 0, 64, 4);
    CHECK(agent_full.dominant == 2 * soft_same.dominant);

    auto lin = lano::flop_count(AttentionVariant::linear, 1000, 0, 128, 8);
    CHECK(lin.dominant == 2ull * 1000 * 128 * 128);

    // linearity of the agent count in N
    auto a1 = lano::flop_count(AttentionVariant::agent, 256, 32, 64, 4);
    auto a2 = lano::flop_count(AttentionVariant::agent, 512, 32, 64, 4);
    CHECK(a2.dominant == 2 * a1.dominant);
    CHECK(a2.lower_order == 2 * a1.lower_order);
}

TEST_CASE("gradients flow through full agent attention (fd, f64)") {
    lano::Rng rng(67);
    lano::AgentAttentionConfig cfg{4, 2, 2, 4, true};
    lano::GridShape grid{2, 3};
    const std::size_t n = 6, d = 4;
    auto f_val = random_tensor<double>(rng, {n, d});

    auto params = random_params(rng, cfg, true, true);
    auto build_from = [&](const ad::Ptr<double>& leaf, int which) {
        lano::AgentAttentionNodes<double> nodes = params.as_constants();
        if (which == 0)
            nodes.w_q = leaf;
        else if (which == 1)
            nodes.u1 = leaf;
        else
            nodes.dwc_weights = ad::reshape(leaf, {d, 3, 3});
        auto out = lano::agent_attention_graph(ad::constant(f_val), cfg, nodes, grid);
        return ad::sum(ad::mul(out, out));
    };
    auto check = [&](const Tensor<double>& x0, int which) {
        auto build = [&](const ad::Ptr<double>& leaf) { return build_from(leaf, which); };
        double best = 1e300;
        for (double h : {1e-5, 1e-4})
            best = std::min(best, ad::fd_gradient_check<double>(build, x0, h));
        CHECK(best < 1e-4);
    };
    check(params.w_q, 0);
    check(params.bias.u1, 1);
    check(lano::reshape(params.dwc.weights, {d * 9}), 2);
}
