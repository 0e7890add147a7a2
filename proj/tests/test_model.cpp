#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "lano/model.hpp"
#include "lano/rng.hpp"

namespace ad = lano::ad;
using lano::LanoConfig;
using lano::LanoModel;
using lano::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(lano::Rng& rng, lano::Shape shape, double lo = -1, double hi = 1) {
    Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

LanoConfig tiny_config() {
    LanoConfig cfg;
    cfg.d_x = 2;
    cfg.d_a = 1;
    cfg.d_u = 1;
    cfg.L = 2;
    cfg.H = 2;
    cfg.d_model = 8;
    cfg.M = 2;
    cfg.bias_base_len = 4;
    return cfg;
}

std::filesystem::path temp_dir() {
    auto p = std::filesystem::temp_directory_path() / "lano_model_tests";
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("encoder is point-wise: identical points encode identically") {
    auto model = LanoModel<double>::init(tiny_config(), 7);
    Tensor<double> x1({1, 2}, {0.3, -0.4});
    Tensor<double> a1({1, 1}, {2.0});
    auto one = model.encode_graph(x1, a1)->value;

    Tensor<double> x7({7, 2});
    Tensor<double> a7({7, 1});
    for (std::size_t i = 0; i < 7; ++i) {
        x7[i * 2] = 0.3;
        x7[i * 2 + 1] = -0.4;
        a7[i] = 2.0;
    }
    auto many = model.encode_graph(x7, a7)->value;
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t c = 0; c < 8; ++c)
            CHECK(many[i * 8 + c] == doctest::Approx(one[c]).epsilon(1e-12));
}

TEST_CASE("encoder with zero weights reduces to the second-layer bias") {
    auto model = LanoModel<double>::init(tiny_config(), 7);
    model.enc_w1->value = Tensor<double>({3, 8});
    model.enc_b1->value = Tensor<double>({8});
    model.enc_w2->value = Tensor<double>({8, 8});
    for (std::size_t i = 0; i < 8; ++i) model.enc_b2->value[i] = double(i);
    lano::Rng rng(3);
    auto out = model.encode_graph(random_tensor<double>(rng, {4, 2}),
                                  random_tensor<double>(rng, {4, 1}))->value;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 8; ++c) CHECK(out[i * 8 + c] == doctest::Approx(double(c)));
}

TEST_CASE("encoder matches a hand-rolled two-matmul oracle") {
    auto model = LanoModel<double>::init(tiny_config(), 11);
    lano::Rng rng(5);
    auto x = random_tensor<double>(rng, {5, 2});
    auto a = random_tensor<double>(rng, {5, 1});
    auto got = model.encode_graph(x, a)->value;

    // oracle: gelu([x a] W1 + b1) W2 + b2 with explicit loops
    const auto& w1 = model.enc_w1->value;
    const auto& b1 = model.enc_b1->value;
    const auto& w2 = model.enc_w2->value;
    const auto& b2 = model.enc_b2->value;
    for (std::size_t i = 0; i < 5; ++i) {
        double in[3] = {x[i * 2], x[i * 2 + 1], a[i]};
        double h[8];
        for (std::size_t c = 0; c < 8; ++c) {
            double acc = b1[c];
            for (std::size_t k = 0; k < 3; ++k) acc += in[k] * w1[k * 8 + c];
            h[c] = lano::detail::gelu_scalar(acc);
        }
        for (std::size_t c = 0; c < 8; ++c) {
            double acc = b2[c];
            for (std::size_t k = 0; k < 8; ++k) acc += h[k] * w2[k * 8 + c];
            CHECK(got[i * 8 + c] == doctest::Approx(acc).epsilon(1e-9));
        }
    }
}

TEST_CASE("block is the identity map when attention and ffn weights are zero") {
    auto cfg = tiny_config();
    auto model = LanoModel<double>::init(cfg, 13);
    for (auto& lay : model.layers) {
        auto zero = [](ad::Ptr<double>& p) {
            if (p) p->value = Tensor<double>(p->value.shape());
        };
        zero(lay.attn.w_q);
        zero(lay.attn.w_k);
        zero(lay.attn.w_v);
        zero(lay.attn.w_o);
        zero(lay.attn.dwc_weights);
        zero(lay.attn.dwc_bias);
        zero(lay.ffn_w1);
        zero(lay.ffn_b1);
        zero(lay.ffn_w2);
        zero(lay.ffn_b2);
    }
    lano::Rng rng(17);
    auto f = random_tensor<double>(rng, {6, 8});
    auto out = model.block_graph(ad::constant(f), 0, lano::GridShape{2, 3})->value;
    REQUIRE(out.same_shape(f));
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(out[i] == doctest::Approx(f[i]));

    auto out1 = model.block_graph(ad::constant(f), 1, std::nullopt)->value;
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(out1[i] == doctest::Approx(f[i]));
}

TEST_CASE("block output shape matches input for any N") {
    auto model = LanoModel<double>::init(tiny_config(), 23);
    lano::Rng rng(29);
    for (std::size_t n : {2ul, 5ul, 9ul}) {
        auto f = random_tensor<double>(rng, {n, 8});
        auto out = model.block_graph(ad::constant(f), 0, std::nullopt)->value;
        CHECK(out.same_shape(f));
    }
}

TEST_CASE("decoder trivial cases and dense oracle") {
    auto cfg = tiny_config();
    auto model = LanoModel<double>::init(cfg, 31);

    // zero weights and bias -> zero field
    model.dec_w1->value = Tensor<double>({8, 1});
    model.dec_b1->value = Tensor<double>({1});
    lano::Rng rng(37);
    auto f = random_tensor<double>(rng, {5, 8});
    auto out = model.decode_graph(ad::constant(f))->value;
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);

    // identity weights pass features through when d_u == d_model
    auto cfg_id = tiny_config();
    cfg_id.d_u = 8;
    auto model_id = LanoModel<double>::init(cfg_id, 31);
    Tensor<double> eye({8, 8});
    for (std::size_t i = 0; i < 8; ++i) eye[i * 8 + i] = 1.0;
    model_id.dec_w1->value = eye;
    model_id.dec_b1->value = Tensor<double>({8});
    auto passed = model_id.decode_graph(ad::constant(f))->value;
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(passed[i] == doctest::Approx(f[i]));

    // random case vs dense oracle
    auto model_r = LanoModel<double>::init(cfg, 41);
    auto got = model_r.decode_graph(ad::constant(f))->value;
    for (std::size_t i = 0; i < 5; ++i) {
        double acc = model_r.dec_b1->value[0];
        for (std::size_t k = 0; k < 8; ++k) acc += f[i * 8 + k] * model_r.dec_w1->value[k];
        CHECK(got[i] == doctest::Approx(acc).epsilon(1e-9));
    }
}

TEST_CASE("two-layer decoder option") {
    auto cfg = tiny_config();
    cfg.decoder_hidden = 6;
    auto model = LanoModel<double>::init(cfg, 43);
    CHECK(model.dec_w2);
    lano::Rng rng(47);
    auto out = model.decode_graph(ad::constant(random_tensor<double>(rng, {4, 8})))->value;
    CHECK(out.shape() == lano::Shape{4, 1});
    CHECK(lano::parameter_count(cfg) == model.num_parameters());
}

TEST_CASE("forward is resolution-agnostic and rejects N < M") {
    auto cfg = tiny_config();
    cfg.M = 4;
    auto model = LanoModel<double>::init(cfg, 53);
    lano::Rng rng(59);
    for (std::size_t n : {16ul, 64ul}) {
        auto x = random_tensor<double>(rng, {n, 2});
        auto a = random_tensor<double>(rng, {n, 1});
        auto u = model.forward(x, a);
        CHECK(u.shape() == lano::Shape{n, 1});
        CHECK(u.all_finite());
    }
    auto x = random_tensor<double>(rng, {3, 2});
    auto a = random_tensor<double>(rng, {3, 1});
    CHECK_THROWS_AS(model.forward(x, a), lano::ShapeError);
}

TEST_CASE("all-zero parameters produce the all-zero prediction") {
    auto model = LanoModel<double>::init(tiny_config(), 61);
    for (const auto& [name, p] : model.parameters()) p->value = Tensor<double>(p->value.shape());
    lano::Rng rng(67);
    auto u = model.forward(random_tensor<double>(rng, {9, 2}), random_tensor<double>(rng, {9, 1}));
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == 0.0);
}

TEST_CASE("parameter shapes do not depend on the dataset resolution") {
    auto model = LanoModel<float>::init(tiny_config(), 71);
    auto params_before = model.parameters();
    std::vector<lano::Shape> shapes;
    for (const auto& [name, p] : params_before) shapes.push_back(p->value.shape());
    lano::Rng rng(73);
    // run forwards at several resolutions; shapes must be untouched
    for (std::size_t n : {4ul, 25ul, 100ul})
        model.forward(random_tensor<float>(rng, {n, 2}), random_tensor<float>(rng, {n, 1}));
    auto params_after = model.parameters();
    for (std::size_t i = 0; i < params_after.size(); ++i)
        CHECK(params_after[i].second->value.shape() == shapes[i]);
}

TEST_CASE("parameter count matches the closed form and the reference scale") {
    LanoConfig cfg;
    cfg.d_x = 2;
    cfg.d_a = 1;
    cfg.d_u = 1;
    cfg.L = 8;
    cfg.H = 8;
    cfg.d_model = 128;
    cfg.M = 64;
    cfg.bias_base_len = 64;
    const std::uint64_t closed = lano::parameter_count(cfg);
    auto model = LanoModel<float>::init(cfg, 1);
    CHECK(model.num_parameters() == closed);
    // ~1.10M learnable parameters at the reference configuration
    CHECK(std::abs(double(closed) - 1.104e6) / 1.104e6 < 0.15);

    // smaller tiny config too
    auto tiny = tiny_config();
    CHECK(LanoModel<float>::init(tiny, 2).num_parameters() == lano::parameter_count(tiny));
}

TEST_CASE("point-wise locality: permuting points permutes encoder output rows") {
    auto model = LanoModel<double>::init(tiny_config(), 79);
    lano::Rng rng(83);
    auto x = random_tensor<double>(rng, {6, 2});
    auto a = random_tensor<double>(rng, {6, 1});
    auto base = model.encode_graph(x, a)->value;
    const std::size_t perm[6] = {4, 2, 0, 5, 1, 3};
    Tensor<double> xp({6, 2}), ap({6, 1});
    for (std::size_t i = 0; i < 6; ++i) {
        xp[i * 2] = x[perm[i] * 2];
        xp[i * 2 + 1] = x[perm[i] * 2 + 1];
        ap[i] = a[perm[i]];
    }
    auto permuted = model.encode_graph(xp, ap)->value;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 8; ++c)
            CHECK(permuted[i * 8 + c] == doctest::Approx(base[perm[i] * 8 + c]));
}

TEST_CASE("end-to-end gradient check on the tiny model (L=2, d=8, H=2, M=2, N=6)") {
    auto cfg = tiny_config();
    auto model = LanoModel<double>::init(cfg, 89);
    lano::Rng rng(97);
    auto x = random_tensor<double>(rng, {6, 2});
    auto a = random_tensor<double>(rng, {6, 1});
    auto grid = lano::GridShape{2, 3};

    // fd-check d(loss)/d(param) for one representative parameter per kind
    auto loss_value = [&]() {
        auto out = model.forward_graph(x, a, grid);
        return ad::sum(ad::mul(out, out));
    };
    const char* names[] = {"encoder.w1",        "layers.0.attn.w_q", "layers.0.attn.bias.u1",
                           "layers.0.ln1.gamma", "layers.1.ffn.w2",  "decoder.w1",
                           "layers.1.attn.dwc.weights"};
    for (const char* name : names) {
        CAPTURE(name);
        ad::Ptr<double> target;
        for (const auto& [n, p] : model.parameters())
            if (n == name) target = p;
        REQUIRE(target);
        model.zero_grad();
        ad::backward(loss_value());
        Tensor<double> analytic =
            target->has_grad() ? target->grad : Tensor<double>(target->value.shape());
        // Take the best-conditioned of several fd steps: coordinates whose
        // true gradient is zero (u1/u2_base shift whole softmax rows, so the
        // layer output does not depend on them) read as pure oracle noise at
        // small h, while curvature-limited coordinates need small h.
        double worst_best = 0;
        auto fd_at = [&](double h) {
            return ad::fd_gradient<double>(
                [&](const Tensor<double>& probe) {
                    Tensor<double> saved = target->value;
                    target->value = probe;
                    double v = loss_value()->value[0];
                    target->value = saved;
                    return v;
                },
                target->value, h);
        };
        std::vector<Tensor<double>> fds;
        for (double h : {1e-5, 1e-4, 1e-3, 1e-2}) fds.push_back(fd_at(h));
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            double best = 1e300;
            for (const auto& fd : fds) {
                const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-8});
                best = std::min(best, std::abs(analytic[i] - fd[i]) / denom);
            }
            worst_best = std::max(worst_best, best);
        }
        CHECK(worst_best < 1e-4);
    }
}

TEST_CASE("checkpoint round trip is bit identical and reloads across resolutions") {
    auto cfg = tiny_config();
    cfg.M = 4;
    auto model = LanoModel<float>::init(cfg, 101);
    lano::Rng rng(103);
    model.u_mean[0] = 0.25f;
    model.u_std[0] = 3.5f;
    const std::string path = (temp_dir() / "round.ckpt").string();
    lano::save_checkpoint(model, path, {{"recorded.test_rel_l2", "0.125"}});

    auto loaded = lano::load_checkpoint<float>(path);
    CHECK(loaded.model.config.d_model == cfg.d_model);
    CHECK(lano::kv::get(loaded.extra, "recorded.test_rel_l2").value() == "0.125");
    CHECK(loaded.model.u_std[0] == 3.5f);
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        const auto& a = model.parameters()[i].second->value;
        const auto& b = loaded.model.parameters()[i].second->value;
        REQUIRE(a.same_shape(b));
        for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
    }

    // saving the reload byte-identically
    const std::string path2 = (temp_dir() / "round2.ckpt").string();
    lano::save_checkpoint(loaded.model, path2, loaded.extra);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);

    // cross-resolution reload: forward at a different N succeeds
    auto u = loaded.model.forward(Tensor<float>::full({25, 2}, 0.5f),
                                  Tensor<float>::full({25, 1}, 1.0f), lano::GridShape{5, 5});
    CHECK(u.shape() == lano::Shape{25, 1});
    CHECK(u.all_finite());
}

TEST_CASE("checkpoint load rejects truncation and missing parameters") {
    auto model = LanoModel<float>::init(tiny_config(), 107);
    const std::string path = (temp_dir() / "bad.ckpt").string();
    lano::save_checkpoint(model, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 31);
    CHECK_THROWS_AS(lano::load_checkpoint<float>(path), lano::IoError);

    {
        std::ofstream os(path, std::ios::binary);
        os << "WRONGMAG" << std::string(32, '\0');
    }
    CHECK_THROWS_AS(lano::load_checkpoint<float>(path), lano::IoError);
}

TEST_CASE("rollout feeds predictions back as coefficients") {
    auto cfg = tiny_config();
    cfg.d_a = 1;
    cfg.d_u = 1;
    cfg.M = 2;
    auto model = LanoModel<double>::init(cfg, 109);
    lano::Rng rng(113);
    auto x = random_tensor<double>(rng, {6, 2});
    auto a0 = random_tensor<double>(rng, {6, 1});
    auto steps = model.rollout(x, a0, 3);
    REQUIRE(steps.size() == 3);
    auto direct = model.forward(x, steps[0]);
    for (std::size_t i = 0; i < direct.size(); ++i)
        CHECK(steps[1][i] == doctest::Approx(direct[i]));

    auto cfg_bad = tiny_config();
    cfg_bad.d_a = 0;
    auto model_bad = LanoModel<double>::init(cfg_bad, 109);
    CHECK_THROWS_AS(model_bad.rollout(x, Tensor<double>(), 2), lano::ShapeError);
}

TEST_CASE("a loaded model serves concurrent forward passes") {
    auto cfg = tiny_config();
    cfg.M = 4;
    auto model = LanoModel<float>::init(cfg, 211);
    lano::Rng rng(223);
    auto x = random_tensor<float>(rng, {16, 2});
    auto a = random_tensor<float>(rng, {16, 1});
    auto serial = model.forward(x, a, lano::GridShape{4, 4});

    std::vector<Tensor<float>> results(4);
    std::vector<std::thread> pool;
    pool.reserve(4);
    for (int t = 0; t < 4; ++t)
        pool.emplace_back([&, t] { results[t] = model.forward(x, a, lano::GridShape{4, 4}); });
    for (auto& th : pool) th.join();
    for (const auto& r : results) {
        REQUIRE(r.same_shape(serial));
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == serial[i]);
    }
}

TEST_CASE("latent-agent variant trains its own agent parameter") {
    auto cfg = tiny_config();
    cfg.latent_agents = true;
    auto model = LanoModel<double>::init(cfg, 127);
    bool found = false;
    for (const auto& [name, p] : model.parameters())
        if (name == "layers.0.attn.latent") {
            found = true;
            CHECK(p->value.shape() == lano::Shape{cfg.M, cfg.d_model});
        }
    CHECK(found);
    CHECK(lano::parameter_count(cfg) == model.num_parameters());
    lano::Rng rng(131);
    auto u = model.forward(random_tensor<double>(rng, {6, 2}), random_tensor<double>(rng, {6, 1}));
    CHECK(u.all_finite());
}
