#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lano/attention.hpp"
#include "lano/autodiff.hpp"
#include "lano/kv.hpp"
#include "lano/rng.hpp"
#include "lano/serialize.hpp"

// The operator stack: point-wise MLP encoder, L pre-norm agent-attention
// blocks with FFNs, linear decoder. Nothing in the parameterization depends
// on the token count, so one checkpoint evaluates at any resolution with
// N >= M tokens.

namespace lano {

struct LanoConfig {
    std::size_t d_x = 2;
    std::size_t d_a = 1;
    std::size_t d_u = 1;
    std::size_t L = 8;
    std::size_t H = 8;
    std::size_t d_model = 128;
    std::size_t M = 64;
    std::size_t ffn_hidden = 0;      // 0 selects 2 * d_model
    bool dwc_enabled = true;
    std::size_t bias_base_len = 64;  // N0
    std::size_t decoder_hidden = 0;  // 0 selects the single linear decoder
    bool use_agent_bias = true;
    bool latent_agents = false;      // ablation: learned agents instead of Q-pooling

    std::size_t ffn_width() const { return ffn_hidden ? ffn_hidden : 2 * d_model; }
    std::size_t encoder_in() const { return d_x + d_a; }

    AgentAttentionConfig attention() const {
        return AgentAttentionConfig{d_model, H, M, bias_base_len, dwc_enabled};
    }

    void validate() const {
        if (!d_x || !d_u || !L || !d_model || !M)
            throw ConfigError("model config: d_x, d_u, L, d_model, M must be positive");
        attention().validate();
    }
};

/// Closed-form learnable parameter count for a config; independent of the
/// dataset resolution by construction.
inline std::uint64_t parameter_count(const LanoConfig& c) {
    const std::uint64_t d = c.d_model, din = c.encoder_in(), ffn = c.ffn_width();
    std::uint64_t total = din * d + d + d * d + d;  // encoder MLP
    std::uint64_t per_layer = 2 * d                 // ln1 affine
                              + 4 * d * d           // q/k/v/o projections
                              + 2 * d               // ln2 affine
                              + d * ffn + ffn + ffn * d + d;  // FFN
    if (c.use_agent_bias) per_layer += 2 * c.H * c.M + 2 * c.H * c.bias_base_len;
    if (c.dwc_enabled) per_layer += 9 * d + d;
    if (c.latent_agents) per_layer += c.M * d;
    total += c.L * per_layer;
    if (c.decoder_hidden)
        total += d * c.decoder_hidden + c.decoder_hidden + c.decoder_hidden * c.d_u + c.d_u;
    else
        total += d * c.d_u + c.d_u;
    return total;
}

template <typename T>
struct LanoModel {
    LanoConfig config;

    ad::Ptr<T> enc_w1, enc_b1, enc_w2, enc_b2;

    struct Layer {
        ad::Ptr<T> ln1_gamma, ln1_beta;
        AgentAttentionNodes<T> attn;
        ad::Ptr<T> ln2_gamma, ln2_beta;
        ad::Ptr<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };
    std::vector<Layer> layers;

    ad::Ptr<T> dec_w1, dec_b1, dec_w2, dec_b2;  // dec_w2/b2 null for the linear decoder

    // Per-channel standardization statistics, identity until training fills
    // them. Stored in the checkpoint alongside the parameters.
    Tensor<T> x_mean, x_std, a_mean, a_std, u_mean, u_std;

    static LanoModel init(const LanoConfig& cfg, std::uint64_t seed);

    /// Named parameters in canonical (save) order.
    std::vector<std::pair<std::string, ad::Ptr<T>>> parameters() const;

    std::uint64_t num_parameters() const {
        std::uint64_t n = 0;
        for (const auto& [name, p] : parameters()) n += p->value.size();
        return n;
    }

    void zero_grad() const {
        for (const auto& [name, p] : parameters()) p->clear_grad();
    }

    /// Point-wise encoder on normalized inputs: [N x (d_x+d_a)] -> [N x d_model].
    ad::Ptr<T> encode_graph(const Tensor<T>& x, const Tensor<T>& a) const;

    ad::Ptr<T> block_graph(const ad::Ptr<T>& f, std::size_t layer,
                           const std::optional<GridShape>& grid) const;

    ad::Ptr<T> decode_graph(const ad::Ptr<T>& f) const;

    /// Full forward on raw inputs, returning predictions in physical units
    /// (inputs standardized, outputs de-standardized inside the graph).
    ad::Ptr<T> forward_graph(const Tensor<T>& x, const Tensor<T>& a,
                             const std::optional<GridShape>& grid) const;

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& a,
                      const std::optional<GridShape>& grid = std::nullopt) const {
        return forward_graph(x, a, grid)->value;
    }

    /// Feeds each prediction back as the coefficient channel for the next
    /// step (requires d_u == d_a). Returns the per-step predictions.
    std::vector<Tensor<T>> rollout(const Tensor<T>& x, const Tensor<T>& a0, std::size_t steps,
                                   const std::optional<GridShape>& grid = std::nullopt) const {
        if (config.d_u != config.d_a)
            throw ShapeError("rollout: needs d_u == d_a, got d_u=" +
                             std::to_string(config.d_u) + " d_a=" + std::to_string(config.d_a));
        std::vector<Tensor<T>> out;
        Tensor<T> a = a0;
        for (std::size_t s = 0; s < steps; ++s) {
            out.push_back(forward(x, a, grid));
            a = out.back();
        }
        return out;
    }
};

namespace detail {

template <typename T>
Tensor<T> uniform_init(Rng rng, Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

/// Normalize columns of v by per-channel stats: (v - mean) / std.
template <typename T>
Tensor<T> standardize(const Tensor<T>& v, const Tensor<T>& mean, const Tensor<T>& stdev) {
    const std::size_t n = v.dim(0), c = v.dim(1);
    Tensor<T> out(v.shape());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] = (v[i * c + j] - mean[j]) / stdev[j];
    return out;
}

}  // namespace detail

template <typename T>
LanoModel<T> LanoModel<T>::init(const LanoConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    LanoModel<T> m;
    m.config = cfg;
    const std::size_t d = cfg.d_model, din = cfg.encoder_in(), ffn = cfg.ffn_width();
    Rng root = Rng(seed).split("init");
    // Every parameter draws from a stream keyed by its own name, so the
    // initialization is independent of construction order.
    auto make = [&root](const std::string& name, Shape shape, std::size_t fan_in) {
        return ad::param(detail::uniform_init<T>(root.split(name), std::move(shape), fan_in),
                         "param");
    };
    auto make_const_value = [](Shape shape, T v) {
        return ad::param(Tensor<T>::full(std::move(shape), v), "param");
    };

    m.enc_w1 = make("encoder.w1", {din, d}, din);
    m.enc_b1 = make("encoder.b1", {d}, din);
    m.enc_w2 = make("encoder.w2", {d, d}, d);
    m.enc_b2 = make("encoder.b2", {d}, d);

    m.layers.resize(cfg.L);
    for (std::size_t l = 0; l < cfg.L; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        Layer& lay = m.layers[l];
        lay.ln1_gamma = make_const_value({d}, T(1));
        lay.ln1_beta = make_const_value({d}, T(0));
        lay.attn.w_q = make(p + "attn.w_q", {d, d}, d);
        lay.attn.w_k = make(p + "attn.w_k", {d, d}, d);
        lay.attn.w_v = make(p + "attn.w_v", {d, d}, d);
        lay.attn.w_o = make(p + "attn.w_o", {d, d}, d);
        if (cfg.use_agent_bias) {
            // Additive positional biases start neutral.
            lay.attn.u1 = make_const_value({cfg.H, cfg.M}, T(0));
            lay.attn.v1_base = make_const_value({cfg.H, cfg.bias_base_len}, T(0));
            lay.attn.u2_base = make_const_value({cfg.H, cfg.bias_base_len}, T(0));
            lay.attn.v2 = make_const_value({cfg.H, cfg.M}, T(0));
        }
        if (cfg.dwc_enabled) {
            lay.attn.dwc_weights = make(p + "attn.dwc.weights", {d, 3, 3}, 9);
            lay.attn.dwc_bias = make(p + "attn.dwc.bias", {d}, 9);
        }
        if (cfg.latent_agents) lay.attn.latent = make(p + "attn.latent", {cfg.M, d}, d);
        lay.ln2_gamma = make_const_value({d}, T(1));
        lay.ln2_beta = make_const_value({d}, T(0));
        lay.ffn_w1 = make(p + "ffn.w1", {d, ffn}, d);
        lay.ffn_b1 = make(p + "ffn.b1", {ffn}, d);
        lay.ffn_w2 = make(p + "ffn.w2", {ffn, d}, ffn);
        lay.ffn_b2 = make(p + "ffn.b2", {d}, ffn);
    }

    if (cfg.decoder_hidden) {
        m.dec_w1 = make("decoder.w1", {d, cfg.decoder_hidden}, d);
        m.dec_b1 = make("decoder.b1", {cfg.decoder_hidden}, d);
        m.dec_w2 = make("decoder.w2", {cfg.decoder_hidden, cfg.d_u}, cfg.decoder_hidden);
        m.dec_b2 = make("decoder.b2", {cfg.d_u}, cfg.decoder_hidden);
    } else {
        m.dec_w1 = make("decoder.w1", {d, cfg.d_u}, d);
        m.dec_b1 = make("decoder.b1", {cfg.d_u}, d);
    }

    m.x_mean = Tensor<T>({cfg.d_x});
    m.x_std = Tensor<T>::ones({cfg.d_x});
    if (cfg.d_a) {
        m.a_mean = Tensor<T>({cfg.d_a});
        m.a_std = Tensor<T>::ones({cfg.d_a});
    }
    m.u_mean = Tensor<T>({cfg.d_u});
    m.u_std = Tensor<T>::ones({cfg.d_u});
    return m;
}

template <typename T>
std::vector<std::pair<std::string, ad::Ptr<T>>> LanoModel<T>::parameters() const {
    std::vector<std::pair<std::string, ad::Ptr<T>>> out;
    out.emplace_back("encoder.w1", enc_w1);
    out.emplace_back("encoder.b1", enc_b1);
    out.emplace_back("encoder.w2", enc_w2);
    out.emplace_back("encoder.b2", enc_b2);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const Layer& lay = layers[l];
        out.emplace_back(p + "ln1.gamma", lay.ln1_gamma);
        out.emplace_back(p + "ln1.beta", lay.ln1_beta);
        out.emplace_back(p + "attn.w_q", lay.attn.w_q);
        out.emplace_back(p + "attn.w_k", lay.attn.w_k);
        out.emplace_back(p + "attn.w_v", lay.attn.w_v);
        out.emplace_back(p + "attn.w_o", lay.attn.w_o);
        if (lay.attn.has_bias()) {
            out.emplace_back(p + "attn.bias.u1", lay.attn.u1);
            out.emplace_back(p + "attn.bias.v1_base", lay.attn.v1_base);
            out.emplace_back(p + "attn.bias.u2_base", lay.attn.u2_base);
            out.emplace_back(p + "attn.bias.v2", lay.attn.v2);
        }
        if (lay.attn.has_dwc()) {
            out.emplace_back(p + "attn.dwc.weights", lay.attn.dwc_weights);
            out.emplace_back(p + "attn.dwc.bias", lay.attn.dwc_bias);
        }
        if (lay.attn.has_latent()) out.emplace_back(p + "attn.latent", lay.attn.latent);
        out.emplace_back(p + "ln2.gamma", lay.ln2_gamma);
        out.emplace_back(p + "ln2.beta", lay.ln2_beta);
        out.emplace_back(p + "ffn.w1", lay.ffn_w1);
        out.emplace_back(p + "ffn.b1", lay.ffn_b1);
        out.emplace_back(p + "ffn.w2", lay.ffn_w2);
        out.emplace_back(p + "ffn.b2", lay.ffn_b2);
    }
    out.emplace_back("decoder.w1", dec_w1);
    out.emplace_back("decoder.b1", dec_b1);
    if (dec_w2) {
        out.emplace_back("decoder.w2", dec_w2);
        out.emplace_back("decoder.b2", dec_b2);
    }
    return out;
}

template <typename T>
ad::Ptr<T> LanoModel<T>::encode_graph(const Tensor<T>& x, const Tensor<T>& a) const {
    if (x.rank() != 2 || x.dim(1) != config.d_x)
        throw ShapeError("encode: coordinates " + shape_str(x.shape()) + ", expected [Nx" +
                         std::to_string(config.d_x) + "]");
    Tensor<T> xn = detail::standardize(x, x_mean, x_std);
    Tensor<T> in;
    if (config.d_a) {
        if (a.rank() != 2 || a.dim(0) != x.dim(0) || a.dim(1) != config.d_a)
            throw ShapeError("encode: coefficients " + shape_str(a.shape()) +
                             ", expected [" + std::to_string(x.dim(0)) + "x" +
                             std::to_string(config.d_a) + "]");
        in = concat(1, xn, detail::standardize(a, a_mean, a_std));
    } else {
        if (a.size())
            throw ShapeError("encode: coefficients supplied but model has d_a = 0");
        in = std::move(xn);
    }
    ad::Ptr<T> h = ad::constant(std::move(in), "input");
    h = ad::broadcast_add(ad::matmul(h, enc_w1), enc_b1);
    h = ad::gelu(h);
    return ad::broadcast_add(ad::matmul(h, enc_w2), enc_b2);
}

template <typename T>
ad::Ptr<T> LanoModel<T>::block_graph(const ad::Ptr<T>& f, std::size_t l,
                                     const std::optional<GridShape>& grid) const {
    const Layer& lay = layers.at(l);
    ad::Ptr<T> attn_in = ad::layer_norm(f, lay.ln1_gamma, lay.ln1_beta, T(1e-5));
    ad::Ptr<T> f1 = ad::add(f, agent_attention_graph(attn_in, config.attention(), lay.attn, grid));
    ad::Ptr<T> ffn_in = ad::layer_norm(f1, lay.ln2_gamma, lay.ln2_beta, T(1e-5));
    ad::Ptr<T> h = ad::gelu(ad::broadcast_add(ad::matmul(ffn_in, lay.ffn_w1), lay.ffn_b1));
    h = ad::broadcast_add(ad::matmul(h, lay.ffn_w2), lay.ffn_b2);
    return ad::add(f1, h);
}

template <typename T>
ad::Ptr<T> LanoModel<T>::decode_graph(const ad::Ptr<T>& f) const {
    ad::Ptr<T> out = ad::broadcast_add(ad::matmul(f, dec_w1), dec_b1);
    if (dec_w2) out = ad::broadcast_add(ad::matmul(ad::gelu(out), dec_w2), dec_b2);
    return out;
}

template <typename T>
ad::Ptr<T> LanoModel<T>::forward_graph(const Tensor<T>& x, const Tensor<T>& a,
                                       const std::optional<GridShape>& grid) const {
    const std::size_t n = x.dim(0);
    if (n < config.M)
        throw ShapeError("forward: N=" + std::to_string(n) + " tokens is below M=" +
                         std::to_string(config.M) + " agents");
    ad::Ptr<T> f = encode_graph(x, a);
    for (std::size_t l = 0; l < layers.size(); ++l) f = block_graph(f, l, grid);
    ad::Ptr<T> un = decode_graph(f);
    // De-standardize per channel: u = un * std + mean.
    Tensor<T> std_tiled({n, config.d_u});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < config.d_u; ++j) std_tiled[i * config.d_u + j] = u_std[j];
    ad::Ptr<T> u = ad::mul(un, ad::constant(std::move(std_tiled), "u_std"));
    Tensor<T> mean_row({std::size_t(1), config.d_u});
    for (std::size_t j = 0; j < config.d_u; ++j) mean_row[j] = u_mean[j];
    return ad::broadcast_add(u, ad::constant(std::move(mean_row), "u_mean"));
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------
//
//   bytes 0..7  magic "LANOCKPT"
//   byte  8     version (1)
//   u64         config block length, then that many bytes of "key = value"
//   u64         named tensor count
//   repeated:   u64 name length, name bytes, tensor record
//
// The config block lists the model fields in canonical order, then any extra
// entries handed in by the caller (training hyperparameters, recorded
// metrics). Normalization statistics ride along as "norm.*" tensors.

inline constexpr std::array<char, 8> kCheckpointMagic = {'L', 'A', 'N', 'O', 'C', 'K', 'P', 'T'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

inline kv::Map config_to_kv(const LanoConfig& c) {
    kv::Map m;
    m.emplace_back("d_x", std::to_string(c.d_x));
    m.emplace_back("d_a", std::to_string(c.d_a));
    m.emplace_back("d_u", std::to_string(c.d_u));
    m.emplace_back("L", std::to_string(c.L));
    m.emplace_back("H", std::to_string(c.H));
    m.emplace_back("d_model", std::to_string(c.d_model));
    m.emplace_back("M", std::to_string(c.M));
    m.emplace_back("ffn_hidden", std::to_string(c.ffn_hidden));
    m.emplace_back("dwc_enabled", kv::fmt_bool(c.dwc_enabled));
    m.emplace_back("bias_base_len", std::to_string(c.bias_base_len));
    m.emplace_back("decoder_hidden", std::to_string(c.decoder_hidden));
    m.emplace_back("use_agent_bias", kv::fmt_bool(c.use_agent_bias));
    m.emplace_back("latent_agents", kv::fmt_bool(c.latent_agents));
    return m;
}

inline LanoConfig config_from_kv(const kv::Map& m, const std::string& ctx) {
    LanoConfig c;
    c.d_x = kv::as_u64(kv::require(m, "d_x", ctx), ctx);
    c.d_a = kv::as_u64(kv::require(m, "d_a", ctx), ctx);
    c.d_u = kv::as_u64(kv::require(m, "d_u", ctx), ctx);
    c.L = kv::as_u64(kv::require(m, "L", ctx), ctx);
    c.H = kv::as_u64(kv::require(m, "H", ctx), ctx);
    c.d_model = kv::as_u64(kv::require(m, "d_model", ctx), ctx);
    c.M = kv::as_u64(kv::require(m, "M", ctx), ctx);
    c.ffn_hidden = kv::as_u64(kv::require(m, "ffn_hidden", ctx), ctx);
    c.dwc_enabled = kv::as_bool(kv::require(m, "dwc_enabled", ctx), ctx);
    c.bias_base_len = kv::as_u64(kv::require(m, "bias_base_len", ctx), ctx);
    c.decoder_hidden = kv::as_u64(kv::require(m, "decoder_hidden", ctx), ctx);
    c.use_agent_bias = kv::as_bool(kv::require(m, "use_agent_bias", ctx), ctx);
    c.latent_agents = kv::as_bool(kv::require(m, "latent_agents", ctx), ctx);
    return c;
}

template <typename T>
void save_checkpoint(const LanoModel<T>& model, const std::string& path,
                     const kv::Map& extra = {}) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint '" + path + "' for writing");
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    const std::uint8_t version = kCheckpointVersion;
    os.write(reinterpret_cast<const char*>(&version), 1);

    kv::Map cfg = config_to_kv(model.config);
    for (const auto& e : extra) cfg.push_back(e);
    const std::string block = kv::format(cfg);
    lano::detail::write_u64(os, block.size());
    os.write(block.data(), static_cast<std::streamsize>(block.size()));

    std::vector<std::pair<std::string, Tensor<T>>> tensors;
    for (const auto& [name, p] : model.parameters()) tensors.emplace_back(name, p->value);
    tensors.emplace_back("norm.x_mean", model.x_mean);
    tensors.emplace_back("norm.x_std", model.x_std);
    if (model.config.d_a) {
        tensors.emplace_back("norm.a_mean", model.a_mean);
        tensors.emplace_back("norm.a_std", model.a_std);
    }
    tensors.emplace_back("norm.u_mean", model.u_mean);
    tensors.emplace_back("norm.u_std", model.u_std);

    lano::detail::write_u64(os, tensors.size());
    for (const auto& [name, t] : tensors) {
        lano::detail::write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(os, t);
    }
    if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

template <typename T>
struct LoadedCheckpoint {
    LanoModel<T> model;
    kv::Map extra;  // non-model keys from the config block
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint '" + path + "'");
    std::array<char, 8> magic;
    is.read(magic.data(), magic.size());
    if (!is || magic != kCheckpointMagic)
        throw IoError("'" + path + "' is not a checkpoint (bad magic)");
    std::uint8_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 1);
    if (!is || version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version in '" + path + "'");

    const std::uint64_t block_len = lano::detail::read_u64(is, "config block length");
    std::string block(block_len, '\0');
    is.read(block.data(), static_cast<std::streamsize>(block_len));
    if (!is) throw IoError("truncated config block in '" + path + "'");
    kv::Map all = kv::parse(block, path);
    LanoConfig cfg = config_from_kv(all, path);

    LoadedCheckpoint<T> out{LanoModel<T>::init(cfg, 0), {}};
    const kv::Map model_keys = config_to_kv(cfg);
    for (const auto& [k, v] : all) {
        bool is_model = false;
        for (const auto& [mk, mv] : model_keys) is_model |= (mk == k);
        if (!is_model) out.extra.emplace_back(k, v);
    }

    const std::uint64_t count = lano::detail::read_u64(is, "tensor count");
    std::vector<std::pair<std::string, Tensor<T>>> tensors;
    tensors.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t name_len = lano::detail::read_u64(is, "tensor name length");
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!is) throw IoError("truncated tensor name in '" + path + "'");
        tensors.emplace_back(name, read_tensor<T>(is, path + ":" + name));
    }

    auto take = [&](const std::string& name) -> Tensor<T> {
        for (auto& [n, t] : tensors)
            if (n == name) {
                Tensor<T> v = std::move(t);
                n.clear();
                return v;
            }
        throw IoError("checkpoint '" + path + "' is missing parameter '" + name + "'");
    };

    for (const auto& [name, p] : out.model.parameters()) {
        Tensor<T> v = take(name);
        if (!v.same_shape(p->value))
            throw IoError("checkpoint '" + path + "' parameter '" + name + "' has shape " +
                          shape_str(v.shape()) + ", expected " + shape_str(p->value.shape()));
        p->value = std::move(v);
    }
    out.model.x_mean = take("norm.x_mean");
    out.model.x_std = take("norm.x_std");
    if (cfg.d_a) {
        out.model.a_mean = take("norm.a_mean");
        out.model.a_std = take("norm.a_std");
    }
    out.model.u_mean = take("norm.u_mean");
    out.model.u_std = take("norm.u_std");
    for (const auto& [n, t] : tensors)
        if (!n.empty())
            throw IoError("checkpoint '" + path + "' contains unknown tensor '" + n + "'");
    return out;
}

}  // namespace lano
