#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lano/autodiff.hpp"
#include "lano/grid.hpp"
#include "lano/tensor.hpp"

// The three attention variants: plain softmax attention (quadratic baseline),
// linear attention with a fixed positive feature map, and agent attention,
// where M pooled agent tokens mediate the token-token interaction in two
// softmax stages of cost O(NMd) each way. Agent attention optionally carries
// rank-1 positional biases on both score matrices (resampled to any token
// count) and a depthwise-convolution branch on grid-structured values.

namespace lano {

struct AgentAttentionConfig {
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t agents = 16;        // M
    std::size_t bias_base_len = 64; // stored length of the positional bias vectors
    bool dwc_enabled = true;

    std::size_t head_dim() const { return d_model / heads; }
    double scale() const { return 1.0 / std::sqrt(static_cast<double>(head_dim())); }

    void validate() const {
        if (heads == 0 || d_model == 0 || d_model % heads != 0)
            throw ConfigError("attention config: d_model (" + std::to_string(d_model) +
                              ") must be a positive multiple of heads (" +
                              std::to_string(heads) + ")");
        if (agents < 1) throw ConfigError("attention config: agents must be >= 1");
        if (bias_base_len < 2) throw ConfigError("attention config: bias_base_len must be >= 2");
    }
};

/// The four learnable bias vectors per head; B1 and B2 are their rank-1
/// broadcast sums, resampled along the token axis by linear interpolation.
template <typename T>
struct AgentBias {
    Tensor<T> u1;       // [H x M]
    Tensor<T> v1_base;  // [H x N0]
    Tensor<T> u2_base;  // [H x N0]
    Tensor<T> v2;       // [H x M]

    bool empty() const { return u1.size() == 0; }

    static AgentBias zeros(std::size_t heads, std::size_t agents, std::size_t base_len) {
        return AgentBias{Tensor<T>({heads, agents}), Tensor<T>({heads, base_len}),
                         Tensor<T>({heads, base_len}), Tensor<T>({heads, agents})};
    }
};

template <typename T>
struct DwcKernel {
    Tensor<T> weights;  // [d_model x 3 x 3]
    Tensor<T> bias;     // [d_model]

    bool empty() const { return weights.size() == 0; }

    static DwcKernel identity(std::size_t d) {
        DwcKernel k{Tensor<T>({d, 3, 3}), Tensor<T>({d})};
        for (std::size_t c = 0; c < d; ++c) k.weights[c * 9 + 4] = T(1);
        return k;
    }
    static DwcKernel zeros(std::size_t d) {
        return DwcKernel{Tensor<T>({d, 3, 3}), Tensor<T>({d})};
    }
};

// ---------------------------------------------------------------------------
// value-level kernels
// ---------------------------------------------------------------------------

/// softmax(Q K^T * scale) V on a single head.
template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            T scale) {
    detail::require_rank2(q, "softmax_attention");
    if (!q.same_shape(k) || k.dim(0) != v.dim(0))
        throw ShapeError("softmax_attention: shapes " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()) +
                         " are inconsistent");
    Tensor<T> scores = lano::scale(matmul_nt(q, k), scale);
    return matmul(softmax_rows(scores), v);
}

enum class LinearFeatureMap { identity, elu_plus_one };

template <typename T>
inline T apply_feature_map(LinearFeatureMap phi, T x) {
    if (phi == LinearFeatureMap::identity) return x;
    // elu(x) + 1: positive, smooth, 1 at the origin.
    return x > T(0) ? x + T(1) : std::exp(x);
}

template <typename T>
Tensor<T> feature_map(LinearFeatureMap phi, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = apply_feature_map(phi, x[i]);
    return out;
}

/// phi(Q) (phi(K)^T V), associated right-to-left so the cost is O(N d^2).
template <typename T>
Tensor<T> linear_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           LinearFeatureMap phi = LinearFeatureMap::elu_plus_one) {
    detail::require_rank2(q, "linear_attention");
    if (!q.same_shape(k) || k.dim(0) != v.dim(0))
        throw ShapeError("linear_attention: shapes " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()) +
                         " are inconsistent");
    Tensor<T> fq = feature_map(phi, q);
    Tensor<T> fk = feature_map(phi, k);
    Tensor<T> kv = matmul_tn(fk, v);  // [d x d_v]
    return matmul(fq, kv);
}

/// Contiguous-segment mean pooling along the token axis. N tokens are split
/// into M segments of size floor(N/M), the first N mod M segments one longer;
/// each agent row is the mean of its segment.
template <typename T>
Tensor<T> agent_pool(const Tensor<T>& q, std::size_t agents) {
    detail::require_rank2(q, "agent_pool");
    const std::size_t n = q.dim(0), d = q.dim(1);
    if (n < agents)
        throw ShapeError("agent_pool: need at least M=" + std::to_string(agents) +
                         " tokens, got N=" + std::to_string(n));
    Tensor<T> out({agents, d});
    const std::size_t base = n / agents, extra = n % agents;
    std::size_t row = 0;
    for (std::size_t m = 0; m < agents; ++m) {
        const std::size_t len = base + (m < extra ? 1 : 0);
        T* dst = out.data() + m * d;
        for (std::size_t r = 0; r < len; ++r) {
            const T* src = q.data() + (row + r) * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
        const T inv = T(1) / T(len);
        for (std::size_t c = 0; c < d; ++c) dst[c] *= inv;
        row += len;
    }
    return out;
}

/// Linear interpolation of each row of [r x c] onto `target` uniformly spaced
/// positions over the same span. Identity when target == c; target == 1 takes
/// the first sample.
template <typename T>
Tensor<T> linear_resample_cols(const Tensor<T>& x, std::size_t target) {
    detail::require_rank2(x, "linear_resample_cols");
    const std::size_t r = x.dim(0), c = x.dim(1);
    detail::require(target >= 1, "linear_resample_cols: target must be >= 1");
    Tensor<T> out({r, target});
    if (target == 1) {
        for (std::size_t i = 0; i < r; ++i) out[i] = x[i * c];
        return out;
    }
    const double step = static_cast<double>(c - 1) / static_cast<double>(target - 1);
    for (std::size_t j = 0; j < target; ++j) {
        const double t = step * static_cast<double>(j);
        std::size_t lo = static_cast<std::size_t>(t);
        if (lo >= c - 1) lo = c - 2;
        const T w = static_cast<T>(t - static_cast<double>(lo));
        for (std::size_t i = 0; i < r; ++i)
            out[i * target + j] = x[i * c + lo] * (T(1) - w) + x[i * c + lo + 1] * w;
    }
    return out;
}

/// Materializes the per-head bias matrices:
///   B1[h,m,n] = u1[h,m] + resample(v1_base[h], N)[n]   -> [H x M x N]
///   B2[h,n,m] = resample(u2_base[h], N)[n] + v2[h,m]   -> [H x N x M]
template <typename T>
std::pair<Tensor<T>, Tensor<T>> build_biases(const AgentBias<T>& bias, std::size_t n_tokens) {
    const std::size_t h = bias.u1.dim(0), m = bias.u1.dim(1);
    Tensor<T> v1 = linear_resample_cols(bias.v1_base, n_tokens);  // [H x N]
    Tensor<T> u2 = linear_resample_cols(bias.u2_base, n_tokens);  // [H x N]
    Tensor<T> b1({h, m, n_tokens});
    Tensor<T> b2({h, n_tokens, m});
    for (std::size_t hh = 0; hh < h; ++hh) {
        for (std::size_t mm = 0; mm < m; ++mm)
            for (std::size_t nn = 0; nn < n_tokens; ++nn)
                b1[(hh * m + mm) * n_tokens + nn] =
                    bias.u1[hh * m + mm] + v1[hh * n_tokens + nn];
        for (std::size_t nn = 0; nn < n_tokens; ++nn)
            for (std::size_t mm = 0; mm < m; ++mm)
                b2[(hh * n_tokens + nn) * m + mm] =
                    u2[hh * n_tokens + nn] + bias.v2[hh * m + mm];
    }
    return {std::move(b1), std::move(b2)};
}

/// Two-stage agent attention on one head with explicit agent tokens:
///   Y = softmax(A K^T * scale + B1) V,  O = softmax(Q A^T * scale + B2) Y.
/// B1 [M x N] and B2 [N x M] may be empty.
template <typename T>
Tensor<T> agent_attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const Tensor<T>& a, const Tensor<T>& b1, const Tensor<T>& b2,
                               T scale) {
    Tensor<T> s1 = lano::scale(matmul_nt(a, k), scale);  // [M x N]
    if (b1.size()) s1 = lano::add(s1, b1);
    Tensor<T> y = matmul(softmax_rows(s1), v);           // [M x d]
    Tensor<T> s2 = lano::scale(matmul_nt(q, a), scale);  // [N x M]
    if (b2.size()) s2 = lano::add(s2, b2);
    return matmul(softmax_rows(s2), y);
}

// ---------------------------------------------------------------------------
// multiply-add counts
// ---------------------------------------------------------------------------

enum class AttentionVariant { softmax, linear, agent };

inline const char* variant_name(AttentionVariant v) {
    switch (v) {
        case AttentionVariant::softmax: return "softmax";
        case AttentionVariant::linear: return "linear";
        default: return "agent";
    }
}

inline AttentionVariant variant_from_name(const std::string& s) {
    if (s == "softmax") return AttentionVariant::softmax;
    if (s == "linear") return AttentionVariant::linear;
    if (s == "agent") return AttentionVariant::agent;
    throw ConfigError("unknown attention variant '" + s + "'");
}

/// Closed-form multiply-add counts for the attention cores (projections
/// excluded; they are identical across variants). `dominant` counts the
/// matrix products; `lower_order` the softmax, scaling, bias, pooling and
/// resampling work. The linear baseline is the single-map formulation, so H
/// does not enter its count.
struct FlopCount {
    std::uint64_t dominant = 0;
    std::uint64_t lower_order = 0;
    std::uint64_t total() const { return dominant + lower_order; }
};

inline FlopCount flop_count(AttentionVariant variant, std::uint64_t n, std::uint64_t m,
                            std::uint64_t d, std::uint64_t h) {
    FlopCount f;
    switch (variant) {
        case AttentionVariant::softmax:
            // per head: scores N^2 d_h + mix N^2 d_h; summed over heads.
            f.dominant = 2 * n * n * d;
            // scale + softmax (max/exp/sum/div) on H score matrices of N^2.
            f.lower_order = 5 * h * n * n;
            break;
        case AttentionVariant::linear:
            f.dominant = 2 * n * d * d;
            f.lower_order = 2 * n * d;  // feature map on Q and K
            break;
        case AttentionVariant::agent:
            // A K^T, S1 V, Q A^T, S2 Y: each N M d_h per head, summed over heads.
            // Every term is proportional to N, so the count is exactly linear
            // in N at fixed M, d, H.
            f.dominant = 4 * n * m * d;
            f.lower_order = n * d                  // Q-pooling accumulation
                            + 2 * h * m * n        // scaling both score matrices
                            + 4 * h * m * n        // rank-1 bias adds
                            + 8 * h * m * n        // both softmaxes
                            + 4 * h * n;           // bias resampling
            break;
    }
    return f;
}

// ---------------------------------------------------------------------------
// graph ops specific to agent attention
// ---------------------------------------------------------------------------

namespace ad {

template <typename T>
Ptr<T> agent_pool(const Ptr<T>& q, std::size_t agents) {
    return detail::make_op<T>(
        lano::agent_pool(q->value, agents), "agent_pool", {q}, [q, agents](Node<T>& n) {
            const std::size_t nn = q->value.dim(0), d = q->value.dim(1);
            const std::size_t base = nn / agents, extra = nn % agents;
            Tensor<T> g(q->value.shape());
            std::size_t row = 0;
            for (std::size_t m = 0; m < agents; ++m) {
                const std::size_t len = base + (m < extra ? 1 : 0);
                const T inv = T(1) / T(len);
                for (std::size_t r = 0; r < len; ++r)
                    for (std::size_t c = 0; c < d; ++c)
                        g[(row + r) * d + c] = n.grad[m * d + c] * inv;
                row += len;
            }
            q->accumulate(g);
        });
}

template <typename T>
Ptr<T> linear_resample_cols(const Ptr<T>& x, std::size_t target) {
    return detail::make_op<T>(
        lano::linear_resample_cols(x->value, target), "linear_resample", {x},
        [x, target](Node<T>& n) {
            const std::size_t r = x->value.dim(0), c = x->value.dim(1);
            Tensor<T> g(x->value.shape());
            if (target == 1) {
                for (std::size_t i = 0; i < r; ++i) g[i * c] += n.grad[i];
            } else {
                const double step =
                    static_cast<double>(c - 1) / static_cast<double>(target - 1);
                for (std::size_t j = 0; j < target; ++j) {
                    const double t = step * static_cast<double>(j);
                    std::size_t lo = static_cast<std::size_t>(t);
                    if (lo >= c - 1) lo = c - 2;
                    const T w = static_cast<T>(t - static_cast<double>(lo));
                    for (std::size_t i = 0; i < r; ++i) {
                        g[i * c + lo] += n.grad[i * target + j] * (T(1) - w);
                        g[i * c + lo + 1] += n.grad[i * target + j] * w;
                    }
                }
            }
            x->accumulate(g);
        });
}

template <typename T>
Ptr<T> dwc_apply(const Ptr<T>& v, const GridShape& grid, const Ptr<T>& weights,
                 const Ptr<T>& bias) {
    return detail::make_op<T>(
        lano::dwc_apply(v->value, grid, weights->value, bias->value), "dwc", {v, weights, bias},
        [v, weights, bias, grid](Node<T>& n) {
            const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(grid.rows);
            const std::ptrdiff_t cols = static_cast<std::ptrdiff_t>(grid.cols);
            const std::size_t d = v->value.dim(1);
            const bool need_v = v->requires_grad;
            const bool need_w = weights->requires_grad;
            Tensor<T> gv(v->value.shape());
            Tensor<T> gw(weights->value.shape());
            for (std::ptrdiff_t i = 0; i < rows; ++i) {
                for (std::ptrdiff_t j = 0; j < cols; ++j) {
                    const T* gout = n.grad.data() + (i * cols + j) * d;
                    for (int u = -1; u <= 1; ++u) {
                        const std::ptrdiff_t ii = i + u;
                        if (ii < 0 || ii >= rows) continue;
                        for (int w = -1; w <= 1; ++w) {
                            const std::ptrdiff_t jj = j + w;
                            if (jj < 0 || jj >= cols) continue;
                            const std::size_t k = static_cast<std::size_t>((u + 1) * 3 + (w + 1));
                            const std::size_t src = (ii * cols + jj) * d;
                            for (std::size_t c = 0; c < d; ++c) {
                                if (need_v) gv[src + c] += weights->value[c * 9 + k] * gout[c];
                                if (need_w) gw[c * 9 + k] += v->value[src + c] * gout[c];
                            }
                        }
                    }
                }
            }
            if (need_v) v->accumulate(gv);
            if (need_w) weights->accumulate(gw);
            if (bias->requires_grad) {
                Tensor<T> gb({d});
                const std::size_t nn = v->value.dim(0);
                for (std::size_t r = 0; r < nn; ++r)
                    for (std::size_t c = 0; c < d; ++c) gb[c] += n.grad[r * d + c];
                bias->accumulate(gb);
            }
        });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// the full attention layer (graph form; value form evaluates the graph)
// ---------------------------------------------------------------------------

/// Learnable pieces of one agent-attention layer as graph nodes. Null bias /
/// dwc / latent pointers disable the corresponding branch.
template <typename T>
struct AgentAttentionNodes {
    lano::ad::Ptr<T> w_q, w_k, w_v, w_o;                // [d x d], no projection biases
    lano::ad::Ptr<T> u1, v1_base, u2_base, v2;          // agent bias vectors
    lano::ad::Ptr<T> dwc_weights, dwc_bias;             // depthwise conv branch
    lano::ad::Ptr<T> latent;                            // [M x d] latent agents (ablation)

    bool has_bias() const { return static_cast<bool>(u1); }
    bool has_dwc() const { return static_cast<bool>(dwc_weights); }
    bool has_latent() const { return static_cast<bool>(latent); }
};

/// Builds the two-stage agent attention layer on the graph:
/// per head h, A = pool(Q_h) (or a latent slice), then
///   Y  = softmax(A K_h^T * scale + B1_h) V_h,
///   O_h = softmax(Q_h A^T * scale + B2_h) Y,
/// heads concatenated, output projection applied, and the DWC branch on the
/// merged value matrix added when a grid is attached.
template <typename T>
lano::ad::Ptr<T> agent_attention_graph(const lano::ad::Ptr<T>& f,
                                       const AgentAttentionConfig& cfg,
                                       const AgentAttentionNodes<T>& p,
                                       const std::optional<GridShape>& grid) {
    namespace g = lano::ad;
    cfg.validate();
    const std::size_t n = f->value.dim(0);
    const std::size_t dh = cfg.head_dim();
    const T scale = static_cast<T>(cfg.scale());
    if (n < cfg.agents)
        throw ShapeError("agent attention: N=" + std::to_string(n) +
                         " tokens but M=" + std::to_string(cfg.agents) + " agents");
    if (grid && grid->points() != n)
        throw ShapeError("agent attention: grid " + std::to_string(grid->rows) + "x" +
                         std::to_string(grid->cols) + " does not cover N=" +
                         std::to_string(n));

    g::Ptr<T> q = g::matmul(f, p.w_q);
    g::Ptr<T> k = g::matmul(f, p.w_k);
    g::Ptr<T> v = g::matmul(f, p.w_v);

    g::Ptr<T> v1r, u2r;
    if (p.has_bias()) {
        v1r = g::linear_resample_cols(p.v1_base, n);  // [H x N]
        u2r = g::linear_resample_cols(p.u2_base, n);  // [H x N]
    }

    std::vector<g::Ptr<T>> heads;
    heads.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        g::Ptr<T> qh = g::slice(q, 1, h * dh, dh);
        g::Ptr<T> kh = g::slice(k, 1, h * dh, dh);
        g::Ptr<T> vh = g::slice(v, 1, h * dh, dh);
        g::Ptr<T> a = p.has_latent() ? g::slice(p.latent, 1, h * dh, dh)
                                     : g::agent_pool(qh, cfg.agents);

        g::Ptr<T> s1 = g::scale(g::matmul(a, g::transpose(kh)), scale);  // [M x N]
        if (p.has_bias()) {
            // B1[m,n] = u1[h,m] + v1r[h,n]: column then row broadcast.
            s1 = g::broadcast_add(s1, g::transpose(g::slice(p.u1, 0, h, 1)));
            s1 = g::broadcast_add(s1, g::slice(v1r, 0, h, 1));
        }
        g::Ptr<T> y = g::matmul(g::softmax_rows(s1), vh);  // [M x dh]

        g::Ptr<T> s2 = g::scale(g::matmul(qh, g::transpose(a)), scale);  // [N x M]
        if (p.has_bias()) {
            // B2[n,m] = u2r[h,n] + v2[h,m]
            s2 = g::broadcast_add(s2, g::transpose(g::slice(u2r, 0, h, 1)));
            s2 = g::broadcast_add(s2, g::slice(p.v2, 0, h, 1));
        }
        heads.push_back(g::matmul(g::softmax_rows(s2), y));
    }

    g::Ptr<T> merged = cfg.heads == 1 ? heads[0] : g::concat(1, heads);
    g::Ptr<T> out = g::matmul(merged, p.w_o);
    if (grid && cfg.dwc_enabled && p.has_dwc())
        out = g::add(out, g::dwc_apply(v, *grid, p.dwc_weights, p.dwc_bias));
    return out;
}

/// Value-level parameters of one agent-attention layer. Empty bias / dwc /
/// latent members disable those branches.
template <typename T>
struct AgentAttentionParams {
    Tensor<T> w_q, w_k, w_v, w_o;
    AgentBias<T> bias;
    DwcKernel<T> dwc;
    Tensor<T> latent;

    AgentAttentionNodes<T> as_constants() const {
        AgentAttentionNodes<T> n;
        n.w_q = ad::constant(w_q, "w_q");
        n.w_k = ad::constant(w_k, "w_k");
        n.w_v = ad::constant(w_v, "w_v");
        n.w_o = ad::constant(w_o, "w_o");
        if (bias.u1.size()) {
            n.u1 = ad::constant(bias.u1, "u1");
            n.v1_base = ad::constant(bias.v1_base, "v1_base");
            n.u2_base = ad::constant(bias.u2_base, "u2_base");
            n.v2 = ad::constant(bias.v2, "v2");
        }
        if (dwc.weights.size()) {
            n.dwc_weights = ad::constant(dwc.weights, "dwc_w");
            n.dwc_bias = ad::constant(dwc.bias, "dwc_b");
        }
        if (latent.size()) n.latent = ad::constant(latent, "latent");
        return n;
    }
};

/// Forward-only agent attention; evaluates the same graph the model trains.
template <typename T>
Tensor<T> agent_attention(const Tensor<T>& f, const AgentAttentionConfig& cfg,
                          const AgentAttentionParams<T>& params,
                          const std::optional<GridShape>& grid = std::nullopt) {
    return agent_attention_graph(ad::constant(f, "f"), cfg, params.as_constants(), grid)->value;
}

}  // namespace lano
