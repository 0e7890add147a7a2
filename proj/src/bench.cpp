#include "lano/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lano/darcy.hpp"
#include "lano/rng.hpp"

namespace lano {

namespace {

using Clock = std::chrono::steady_clock;

struct KernelInputs {
    Tensor<float> q, k, v;
    AgentBias<float> bias;
};

KernelInputs make_inputs(std::size_t n, std::size_t d, std::size_t m, std::size_t heads,
                         std::uint64_t seed) {
    Rng rng = Rng(seed).split("bench").split(n);
    auto fill = [&rng](Shape shape) {
        Tensor<float> t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<float>(rng.uniform(-1, 1));
        return t;
    };
    KernelInputs in;
    in.q = fill({n, d});
    in.k = fill({n, d});
    in.v = fill({n, d});
    in.bias = {fill({heads, m}), fill({heads, 64}), fill({heads, 64}), fill({heads, m})};
    return in;
}

// One evaluation of the attention core under test; returns a checksum so the
// optimizer cannot drop the work.
float run_variant(AttentionVariant variant, const KernelInputs& in, std::size_t m,
                  std::size_t heads) {
    const std::size_t n = in.q.dim(0), d = in.q.dim(1);
    const std::size_t dh = d / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    float checksum = 0;
    switch (variant) {
        case AttentionVariant::softmax:
            for (std::size_t h = 0; h < heads; ++h) {
                auto qh = slice(in.q, 1, h * dh, dh);
                auto kh = slice(in.k, 1, h * dh, dh);
                auto vh = slice(in.v, 1, h * dh, dh);
                checksum += softmax_attention(qh, kh, vh, scale)[0];
            }
            break;
        case AttentionVariant::linear:
            checksum += linear_attention(in.q, in.k, in.v)[0];
            break;
        case AttentionVariant::agent: {
            auto v1r = linear_resample_cols(in.bias.v1_base, n);
            auto u2r = linear_resample_cols(in.bias.u2_base, n);
            for (std::size_t h = 0; h < heads; ++h) {
                auto qh = slice(in.q, 1, h * dh, dh);
                auto kh = slice(in.k, 1, h * dh, dh);
                auto vh = slice(in.v, 1, h * dh, dh);
                auto a = agent_pool(qh, m);
                Tensor<float> b1({m, n}), b2({n, m});
                for (std::size_t mm = 0; mm < m; ++mm)
                    for (std::size_t nn = 0; nn < n; ++nn)
                        b1[mm * n + nn] = in.bias.u1[h * m + mm] + v1r[h * n + nn];
                for (std::size_t nn = 0; nn < n; ++nn)
                    for (std::size_t mm = 0; mm < m; ++mm)
                        b2[nn * m + mm] = u2r[h * n + nn] + in.bias.v2[h * m + mm];
                checksum += agent_attention_core(qh, kh, vh, a, b1, b2, scale)[0];
            }
            break;
        }
    }
    return checksum;
}

struct TimedSample {
    double median = 0;
    double cv = 0;
};

TimedSample time_variant(AttentionVariant variant, const KernelInputs& in, std::size_t m,
                         std::size_t heads, const SweepOptions& opts) {
    volatile float sink = 0;
    // Calibrate an inner repetition count so each timed quantum is long
    // enough for the clock.
    auto t0 = Clock::now();
    sink += run_variant(variant, in, m, heads);
    double est = std::chrono::duration<double>(Clock::now() - t0).count();
    const int inner = std::max(1, static_cast<int>(opts.min_quantum_seconds /
                                                   std::max(est, 1e-7)));
    for (int w = 1; w < opts.warmups; ++w) sink += run_variant(variant, in, m, heads);

    std::vector<double> times(static_cast<std::size_t>(opts.reps));
    for (auto& t : times) {
        auto begin = Clock::now();
        for (int i = 0; i < inner; ++i) sink += run_variant(variant, in, m, heads);
        t = std::chrono::duration<double>(Clock::now() - begin).count() / inner;
    }
    (void)sink;
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    double mean = 0;
    for (double t : times) mean += t;
    mean /= static_cast<double>(times.size());
    double var = 0;
    for (double t : times) var += (t - mean) * (t - mean);
    var /= static_cast<double>(times.size());
    return {median, std::sqrt(var) / mean};
}

double fit_loglog_slope(const std::vector<BenchResult>& rows) {
    const std::size_t n = rows.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& r : rows) {
        const double x = std::log(static_cast<double>(r.n));
        const double y = std::log(r.wall_seconds);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double dn = static_cast<double>(n);
    return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

}  // namespace

SweepResult scaling_sweep(AttentionVariant variant, const std::vector<std::size_t>& ns,
                          std::size_t m, std::size_t d, std::size_t heads,
                          const SweepOptions& opts) {
    if (ns.size() < 4)
        throw ConfigError("scaling_sweep: need at least 4 distinct N values");
    if (d % heads != 0) throw ConfigError("scaling_sweep: d must be a multiple of heads");
    SweepResult out;
    out.variant = variant;
    for (std::size_t n : ns) {
        KernelInputs in = make_inputs(n, d, m, heads, opts.seed);
        TimedSample t = time_variant(variant, in, m, heads, opts);
        bool flagged = false;
        if (t.cv >= opts.cv_limit) {
            t = time_variant(variant, in, m, heads, opts);  // one retry
            flagged = t.cv >= opts.cv_limit;
        }
        BenchResult row;
        row.variant = variant;
        row.n = n;
        row.m = m;
        row.d = d;
        row.heads = heads;
        row.flops = flop_count(variant, n, m, d, heads);
        row.wall_seconds = t.median;
        row.cv = t.cv;
        row.flagged = flagged;
        out.rows.push_back(row);
    }
    out.slope = fit_loglog_slope(out.rows);
    return out;
}

void write_bench_csv(const std::string& path, const std::string& config_line,
                     const std::vector<SweepResult>& sweeps) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write bench csv '" + path + "'");
    os << "# " << config_line << "\n";
    os << "variant,N,M,d,H,flops_dominant,flops_lower_order,wall_seconds,cv,flagged\n";
    char buf[256];
    for (const auto& sweep : sweeps)
        for (const auto& r : sweep.rows) {
            std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%zu,%zu,%llu,%llu,%.9g,%.4g,%d\n",
                          variant_name(r.variant), r.n, r.m, r.d, r.heads,
                          static_cast<unsigned long long>(r.flops.dominant),
                          static_cast<unsigned long long>(r.flops.lower_order),
                          r.wall_seconds, r.cv, r.flagged ? 1 : 0);
            os << buf;
        }
    for (const auto& sweep : sweeps) {
        std::snprintf(buf, sizeof(buf), "# slope variant=%s value=%.6g\n",
                      variant_name(sweep.variant), sweep.slope);
        os << buf;
    }
}

void write_scaling_svg(const std::string& path, const std::vector<SweepResult>& sweeps) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write plot '" + path + "'");
    const double width = 640, height = 480, margin = 60;
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (const auto& s : sweeps)
        for (const auto& r : s.rows) {
            min_x = std::min(min_x, std::log10(double(r.n)));
            max_x = std::max(max_x, std::log10(double(r.n)));
            min_y = std::min(min_y, std::log10(r.wall_seconds));
            max_y = std::max(max_y, std::log10(r.wall_seconds));
        }
    auto px = [&](double lx) {
        return margin + (lx - min_x) / std::max(1e-12, max_x - min_x) * (width - 2 * margin);
    };
    auto py = [&](double ly) {
        return height - margin -
               (ly - min_y) / std::max(1e-12, max_y - min_y) * (height - 2 * margin);
    };
    const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c"};
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
       << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << width / 2 << "' y='20' text-anchor='middle'>attention wall time vs "
          "tokens (log-log)</text>\n";
    os << "<text x='" << width / 2 << "' y='" << height - 12
       << "' text-anchor='middle'>log10 N</text>\n";
    os << "<text x='18' y='" << height / 2 << "' transform='rotate(-90 18 " << height / 2
       << ")' text-anchor='middle'>log10 seconds</text>\n";
    os << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
       << "' y2='" << height - margin << "' stroke='black'/>\n";
    os << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
       << height - margin << "' stroke='black'/>\n";
    int ci = 0;
    for (const auto& s : sweeps) {
        const char* color = colors[ci % 3];
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
        for (const auto& r : s.rows)
            os << px(std::log10(double(r.n))) << "," << py(std::log10(r.wall_seconds)) << " ";
        os << "'/>\n";
        for (const auto& r : s.rows)
            os << "<circle cx='" << px(std::log10(double(r.n))) << "' cy='"
               << py(std::log10(r.wall_seconds)) << "' r='3' fill='" << color << "'/>\n";
        char label[128];
        std::snprintf(label, sizeof(label), "%s (slope %.2f)", variant_name(s.variant),
                      s.slope);
        os << "<text x='" << width - margin - 180 << "' y='" << margin + 18 * (ci + 1)
           << "' fill='" << color << "'>" << label << "</text>\n";
        ++ci;
    }
    os << "</svg>\n";
}

// ---------------------------------------------------------------------------
// ablations
// ---------------------------------------------------------------------------

LanoConfig apply_ablation_arm(LanoConfig cfg, const std::string& arm) {
    cfg.use_agent_bias = true;
    cfg.dwc_enabled = true;
    cfg.latent_agents = false;
    if (arm == "reference") return cfg;
    if (arm == "no_bias") {
        cfg.use_agent_bias = false;
        return cfg;
    }
    if (arm == "no_dwc") {
        cfg.dwc_enabled = false;
        return cfg;
    }
    if (arm == "no_bias_no_dwc") {
        cfg.use_agent_bias = false;
        cfg.dwc_enabled = false;
        return cfg;
    }
    if (arm == "latent") {
        cfg.latent_agents = true;
        return cfg;
    }
    throw ConfigError("unknown ablation arm '" + arm +
                      "' (reference|no_bias|no_dwc|no_bias_no_dwc|latent)");
}

std::vector<AblationRow> agent_count_ablation(const Dataset<float>& data,
                                              const std::vector<std::size_t>& agent_counts,
                                              const LanoConfig& base, const TrainConfig& tcfg,
                                              const std::string& work_dir) {
    std::vector<AblationRow> rows;
    for (std::size_t m : agent_counts) {
        if (m > data.info.points)
            throw ConfigError("agent_count_ablation: M=" + std::to_string(m) +
                              " exceeds the dataset token count");
        LanoConfig cfg = base;
        cfg.M = m;
        auto model = LanoModel<float>::init(cfg, tcfg.seed);
        auto res = train(model, data, tcfg,
                         work_dir + "/agents_M" + std::to_string(m));
        rows.push_back({"M=" + std::to_string(m), tcfg.seed, parameter_count(cfg),
                        res.best_test_rel_l2});
    }
    return rows;
}

std::vector<AblationRow> component_ablation(const Dataset<float>& data,
                                            const std::vector<std::string>& arms,
                                            const std::vector<std::uint64_t>& seeds,
                                            const LanoConfig& base, const TrainConfig& tcfg,
                                            const std::string& work_dir) {
    std::vector<AblationRow> rows;
    for (const auto& arm : arms) {
        LanoConfig cfg = apply_ablation_arm(base, arm);
        for (std::uint64_t seed : seeds) {
            TrainConfig t = tcfg;
            t.seed = seed;
            auto model = LanoModel<float>::init(cfg, seed);
            auto res = train(model, data, t,
                             work_dir + "/" + arm + "_seed" + std::to_string(seed));
            rows.push_back({arm, seed, parameter_count(cfg), res.best_test_rel_l2});
        }
    }
    return rows;
}

void write_ablation_csv(const std::string& path, const std::string& config_line,
                        const std::vector<AblationRow>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write ablation csv '" + path + "'");
    os << "# " << config_line << "\n";
    os << "arm,seed,param_count,test_rel_l2\n";
    char buf[192];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%llu,%llu,%.9g\n", r.arm.c_str(),
                      static_cast<unsigned long long>(r.seed),
                      static_cast<unsigned long long>(r.param_count), r.test_rel_l2);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// zero-shot
// ---------------------------------------------------------------------------

std::vector<ZeroShotRow> zero_shot_eval(const LanoModel<float>& model,
                                        const Dataset<float>& data,
                                        const std::vector<std::size_t>& resolutions) {
    if (!data.info.grid)
        throw ConfigError("zero_shot_eval: dataset has no grid shape to resample");
    const GridShape native = *data.info.grid;
    std::vector<ZeroShotRow> out;
    out.push_back({native.rows, native.cols, native.points(),
                   evaluate(model, data.test, data.info.grid), true});
    for (std::size_t r : resolutions) {
        const GridShape target{r, r};
        if (target == native) continue;  // native row already present
        if (target.points() < model.config.M)
            throw ConfigError("zero_shot_eval: resolution " + std::to_string(r) +
                              " has fewer tokens than M=" + std::to_string(model.config.M));
        std::vector<Sample<float>> resampled;
        resampled.reserve(data.test.size());
        Tensor<float> coords = grid_coordinates(r, r).cast<float>();
        for (const auto& s : data.test) {
            Sample<float> t;
            t.x = coords;
            if (s.a.size()) t.a = resample_tokens(s.a, native, target);
            t.u = resample_tokens(s.u, native, target);
            resampled.push_back(std::move(t));
        }
        out.push_back({r, r, target.points(),
                       evaluate(model, resampled, std::optional<GridShape>{target}), false});
    }
    return out;
}

void write_zero_shot_csv(const std::string& path, const std::string& config_line,
                         const std::vector<ZeroShotRow>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write zero-shot csv '" + path + "'");
    os << "# " << config_line << "\n";
    os << "grid_h,grid_w,points,rel_l2,native\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%.9g,%d\n", r.rows, r.cols, r.points,
                      r.rel_l2, r.native ? 1 : 0);
        os << buf;
    }
}

}  // namespace lano
