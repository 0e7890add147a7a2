// lano: command-line front end for the agent-attention neural operator
// toolkit. Subcommands: gen-darcy, train, eval, zero-shot, bench-attn,
// ablate, grad-check. Every run echoes its resolved configuration (including
// the seed) before doing any work, and all randomness flows from that seed.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lano/bench.hpp"
#include "lano/darcy.hpp"
#include "lano/dataset.hpp"
#include "lano/gradcheck.hpp"
#include "lano/model.hpp"
#include "lano/train.hpp"

namespace fs = std::filesystem;

namespace {

struct ModelFlags {
    lano::LanoConfig cfg;
    bool has_d_x = false, has_d_a = false, has_d_u = false;
};

// Registers the LanoConfig fields as flags; names mirror the config-file
// keys exactly.
void add_model_options(CLI::App* cmd, ModelFlags& mf) {
    cmd->add_option("--d_x", mf.cfg.d_x, "coordinate channels (default: from dataset)")
        ->each([&mf](const std::string&) { mf.has_d_x = true; });
    cmd->add_option("--d_a", mf.cfg.d_a, "coefficient channels (default: from dataset)")
        ->each([&mf](const std::string&) { mf.has_d_a = true; });
    cmd->add_option("--d_u", mf.cfg.d_u, "output channels (default: from dataset)")
        ->each([&mf](const std::string&) { mf.has_d_u = true; });
    cmd->add_option("--L", mf.cfg.L, "attention blocks")->capture_default_str();
    cmd->add_option("--H", mf.cfg.H, "attention heads")->capture_default_str();
    cmd->add_option("--d_model", mf.cfg.d_model, "embedding width")->capture_default_str();
    cmd->add_option("--M", mf.cfg.M, "agent tokens")->capture_default_str();
    cmd->add_option("--ffn_hidden", mf.cfg.ffn_hidden, "FFN hidden width (0 = 2*d_model)")
        ->capture_default_str();
    cmd->add_option("--dwc_enabled", mf.cfg.dwc_enabled,
                    "depthwise-conv branch on grid data")
        ->capture_default_str();
    cmd->add_option("--bias_base_len", mf.cfg.bias_base_len,
                    "stored length of the positional bias vectors")
        ->capture_default_str();
    cmd->add_option("--decoder_hidden", mf.cfg.decoder_hidden,
                    "decoder hidden width (0 = linear decoder)")
        ->capture_default_str();
    cmd->add_option("--use_agent_bias", mf.cfg.use_agent_bias, "agent bias vectors")
        ->capture_default_str();
    cmd->add_option("--latent_agents", mf.cfg.latent_agents,
                    "learned agents instead of Q-pooling")
        ->capture_default_str();
}

void add_train_options(CLI::App* cmd, lano::TrainConfig& tc, std::string& schedule) {
    cmd->add_option("--epochs", tc.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--init_lr", tc.init_lr, "peak learning rate")->capture_default_str();
    cmd->add_option("--batch_size", tc.batch_size, "samples per step")->capture_default_str();
    cmd->add_option("--schedule", schedule, "lr schedule: cosine | onecycle")
        ->capture_default_str();
    cmd->add_option("--weight_decay", tc.weight_decay, "decoupled AdamW weight decay")
        ->capture_default_str();
    cmd->add_option("--gamma_grad", tc.gamma_grad, "gradient-loss weight on grid datasets")
        ->capture_default_str();
    cmd->add_option("--seed", tc.seed, "run seed")->capture_default_str();
    cmd->add_option("--precision", tc.precision, "f32 | f64")->capture_default_str();
}

// Applies "key = value" config-file entries; CLI flags (already parsed into
// the structs) win, so the file only fills fields the user did not pass.
void apply_config_file(const std::string& path, CLI::App* cmd, ModelFlags& mf,
                       lano::TrainConfig& tc, std::string& schedule) {
    std::ifstream is(path);
    if (!is) throw lano::IoError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const lano::kv::Map kvs = lano::kv::parse(text, path);
    auto overridden = [cmd](const std::string& flag) {
        const CLI::Option* o = cmd->get_option_no_throw("--" + flag);
        return o && o->count() > 0;
    };
    for (const auto& [key, value] : kvs) {
        if (overridden(key)) continue;
        const std::string ctx = path + ":" + key;
        if (key == "d_x") {
            mf.cfg.d_x = lano::kv::as_u64(value, ctx);
            mf.has_d_x = true;
        } else if (key == "d_a") {
            mf.cfg.d_a = lano::kv::as_u64(value, ctx);
            mf.has_d_a = true;
        } else if (key == "d_u") {
            mf.cfg.d_u = lano::kv::as_u64(value, ctx);
            mf.has_d_u = true;
        } else if (key == "L") {
            mf.cfg.L = lano::kv::as_u64(value, ctx);
        } else if (key == "H") {
            mf.cfg.H = lano::kv::as_u64(value, ctx);
        } else if (key == "d_model") {
            mf.cfg.d_model = lano::kv::as_u64(value, ctx);
        } else if (key == "M") {
            mf.cfg.M = lano::kv::as_u64(value, ctx);
        } else if (key == "ffn_hidden") {
            mf.cfg.ffn_hidden = lano::kv::as_u64(value, ctx);
        } else if (key == "dwc_enabled") {
            mf.cfg.dwc_enabled = lano::kv::as_bool(value, ctx);
        } else if (key == "bias_base_len") {
            mf.cfg.bias_base_len = lano::kv::as_u64(value, ctx);
        } else if (key == "decoder_hidden") {
            mf.cfg.decoder_hidden = lano::kv::as_u64(value, ctx);
        } else if (key == "use_agent_bias") {
            mf.cfg.use_agent_bias = lano::kv::as_bool(value, ctx);
        } else if (key == "latent_agents") {
            mf.cfg.latent_agents = lano::kv::as_bool(value, ctx);
        } else if (key == "epochs") {
            tc.epochs = lano::kv::as_u64(value, ctx);
        } else if (key == "init_lr") {
            tc.init_lr = lano::kv::as_f64(value, ctx);
        } else if (key == "batch_size") {
            tc.batch_size = lano::kv::as_u64(value, ctx);
        } else if (key == "schedule") {
            schedule = value;
        } else if (key == "weight_decay") {
            tc.weight_decay = lano::kv::as_f64(value, ctx);
        } else if (key == "gamma_grad") {
            tc.gamma_grad = lano::kv::as_f64(value, ctx);
        } else if (key == "seed") {
            tc.seed = lano::kv::as_u64(value, ctx);
        } else if (key == "precision") {
            tc.precision = value;
        } else {
            throw lano::ConfigError(path + ": unknown config key '" + key + "'");
        }
    }
}

void echo_kv(const lano::kv::Map& m) { std::cout << lano::kv::format(m) << std::flush; }

void echo_model_and_train(const lano::LanoConfig& mc, const lano::TrainConfig& tc) {
    lano::kv::Map m = lano::config_to_kv(mc);
    for (auto& e : lano::train_config_to_kv(tc)) m.push_back(e);
    echo_kv(m);
}

template <typename T>
int run_train_typed(const lano::LanoConfig& mcfg, const lano::TrainConfig& tcfg,
                    const std::string& data_dir, const std::string& out_dir) {
    auto data = lano::load_dataset<T>(data_dir);
    auto model = lano::LanoModel<T>::init(mcfg, tcfg.seed);
    auto res = lano::train(model, data, tcfg, out_dir, &std::cout);
    std::cout << "best_epoch = " << res.best_epoch << "\n";
    std::cout << "best_test_rel_l2 = " << lano::kv::fmt_f64(res.best_test_rel_l2) << "\n";
    std::cout << "final_test_rel_l2 = " << lano::kv::fmt_f64(res.log.back().test_rel_l2)
              << "\n";
    std::cout << "metrics_csv = " << res.metrics_csv << "\n";
    std::cout << "best_checkpoint = " << res.best_checkpoint << "\n";
    std::cout << "last_checkpoint = " << res.last_checkpoint << "\n";
    return 0;
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lano: linear-attention neural operator toolkit"};
    app.name("lano");
    app.require_subcommand(1);

    // ---- gen-darcy ----
    auto* gen = app.add_subcommand("gen-darcy",
                                   "generate a synthetic Darcy-flow dataset with the "
                                   "finite-volume solver");
    lano::DarcyGenConfig gcfg;
    std::string gen_out;
    gen->add_option("--n", gcfg.n, "grid side (n x n nodes)")->capture_default_str();
    gen->add_option("--samples", gcfg.samples, "total sample count")->capture_default_str();
    gen->add_option("--train_samples", gcfg.train_samples, "training split size")
        ->capture_default_str();
    gen->add_option("--a_lo", gcfg.a_lo, "low permeability value")->capture_default_str();
    gen->add_option("--a_hi", gcfg.a_hi, "high permeability value")->capture_default_str();
    gen->add_option("--seed", gcfg.seed, "generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "output dataset directory")->required();

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train a model on a dataset directory");
    ModelFlags tr_model;
    lano::TrainConfig tr_cfg;
    std::string tr_schedule = "onecycle";
    std::string tr_config_path, tr_data, tr_out;
    tr->add_option("--config", tr_config_path, "key = value config file (flags override it)");
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--out", tr_out, "run output directory")->required();
    add_model_options(tr, tr_model);
    add_train_options(tr, tr_cfg, tr_schedule);

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
    std::string ev_ckpt, ev_data;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();

    // ---- zero-shot ----
    auto* zs = app.add_subcommand("zero-shot",
                                  "evaluate one checkpoint across resolutions without "
                                  "retraining");
    std::string zs_ckpt, zs_data, zs_out;
    std::vector<std::size_t> zs_res = {24, 32};
    zs->add_option("--ckpt", zs_ckpt, "checkpoint file")->required();
    zs->add_option("--data", zs_data, "dataset directory (grid data)")->required();
    zs->add_option("--resolutions", zs_res, "square grid sides to evaluate at")
        ->delimiter(',')
        ->capture_default_str();
    zs->add_option("--out", zs_out, "optional CSV output path");

    // ---- bench-attn ----
    auto* ba = app.add_subcommand("bench-attn",
                                  "time attention variants across token counts and fit "
                                  "log-log slopes");
    std::string ba_variants = "softmax,agent";
    std::vector<std::size_t> ba_ns = {256, 512, 1024, 2048, 4096};
    std::size_t ba_m = 32, ba_d = 64, ba_h = 4;
    lano::SweepOptions ba_opts;
    std::string ba_out, ba_plot;
    ba->add_option("--variants", ba_variants, "comma list: softmax | linear | agent")
        ->capture_default_str();
    ba->add_option("--ns", ba_ns, "token counts to sweep")
        ->delimiter(',')
        ->capture_default_str();
    ba->add_option("--m", ba_m, "agent tokens")->capture_default_str();
    ba->add_option("--d", ba_d, "embedding width")->capture_default_str();
    ba->add_option("--heads", ba_h, "attention heads")->capture_default_str();
    ba->add_option("--reps", ba_opts.reps, "timed repetitions per point")
        ->capture_default_str();
    ba->add_option("--warmups", ba_opts.warmups, "warm-up evaluations per point")
        ->capture_default_str();
    ba->add_option("--seed", ba_opts.seed, "input seed")->capture_default_str();
    ba->add_option("--out", ba_out, "CSV output path");
    ba->add_option("--plot", ba_plot, "optional SVG plot path");

    // ---- ablate ----
    auto* ab = app.add_subcommand("ablate",
                                  "train ablation arms (components) or an agent-count "
                                  "sweep");
    std::string ab_what = "components";
    std::string ab_data, ab_out, ab_workdir;
    std::string ab_arms = "reference,no_bias,no_dwc,no_bias_no_dwc,latent";
    std::vector<std::uint64_t> ab_seeds = {1, 2, 3};
    std::vector<std::size_t> ab_agents = {4, 8, 16, 32};
    ModelFlags ab_model;
    lano::TrainConfig ab_cfg;
    std::string ab_schedule = "onecycle";
    ab->add_option("--what", ab_what, "components | agents")->capture_default_str();
    ab->add_option("--data", ab_data, "dataset directory")->required();
    ab->add_option("--arms", ab_arms, "component arms (comma list)")->capture_default_str();
    ab->add_option("--seeds", ab_seeds, "seeds for the component arms")
        ->delimiter(',')
        ->capture_default_str();
    ab->add_option("--agent_counts", ab_agents, "agent counts for --what agents")
        ->delimiter(',')
        ->capture_default_str();
    ab->add_option("--out", ab_out, "CSV output path")->required();
    ab->add_option("--workdir", ab_workdir, "directory for the per-arm runs");
    add_model_options(ab, ab_model);
    add_train_options(ab, ab_cfg, ab_schedule);

    // ---- grad-check ----
    auto* gc = app.add_subcommand("grad-check",
                                  "run the finite-difference gradient suite and exit "
                                  "non-zero on failure");
    double gc_threshold = 1e-4;
    bool gc_verbose = false;
    gc->add_option("--threshold", gc_threshold, "maximum allowed relative error")
        ->capture_default_str();
    gc->add_flag("--verbose", gc_verbose, "print one line per checked entry");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) {
            lano::kv::Map echo;
            echo.emplace_back("command", "gen-darcy");
            echo.emplace_back("n", std::to_string(gcfg.n));
            echo.emplace_back("samples", std::to_string(gcfg.samples));
            echo.emplace_back("train_samples", std::to_string(gcfg.train_samples));
            echo.emplace_back("a_lo", lano::kv::fmt_f64(gcfg.a_lo));
            echo.emplace_back("a_hi", lano::kv::fmt_f64(gcfg.a_hi));
            echo.emplace_back("seed", std::to_string(gcfg.seed));
            echo.emplace_back("out", gen_out);
            echo_kv(echo);
            auto info = lano::gen_dataset(gcfg, gen_out);
            std::cout << "wrote " << info.samples << " samples (" << info.train_samples
                      << " train / " << info.test_samples << " test) to "
                      << lano::manifest_path(gen_out) << "\n";
            return 0;
        }

        if (tr->parsed()) {
            if (!tr_config_path.empty())
                apply_config_file(tr_config_path, tr, tr_model, tr_cfg, tr_schedule);
            tr_cfg.schedule = lano::schedule_from_name(tr_schedule);
            tr_cfg.validate();
            // channel counts default to the dataset's manifest
            {
                std::ifstream is(lano::manifest_path(tr_data));
                if (!is)
                    throw lano::IoError("cannot open dataset manifest '" +
                                        lano::manifest_path(tr_data) + "'");
                std::string text((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
                auto info = lano::manifest_from_kv(lano::kv::parse(text, tr_data),
                                                   lano::manifest_path(tr_data));
                if (!tr_model.has_d_x) tr_model.cfg.d_x = info.d_x;
                if (!tr_model.has_d_a) tr_model.cfg.d_a = info.d_a;
                if (!tr_model.has_d_u) tr_model.cfg.d_u = info.d_u;
            }
            tr_model.cfg.validate();
            std::cout << "command = train\ndata = " << tr_data << "\nout = " << tr_out
                      << "\n";
            echo_model_and_train(tr_model.cfg, tr_cfg);
            if (tr_cfg.precision == "f64")
                return run_train_typed<double>(tr_model.cfg, tr_cfg, tr_data, tr_out);
            return run_train_typed<float>(tr_model.cfg, tr_cfg, tr_data, tr_out);
        }

        if (ev->parsed()) {
            std::cout << "command = eval\nckpt = " << ev_ckpt << "\ndata = " << ev_data
                      << "\n";
            auto loaded = lano::load_checkpoint<float>(ev_ckpt);
            echo_kv(lano::config_to_kv(loaded.model.config));
            auto data = lano::load_dataset<float>(ev_data);
            if (auto rec = lano::kv::get(loaded.extra, "recorded.test_rel_l2"))
                std::cout << "recorded_test_rel_l2 = " << *rec << "\n";
            const double err = lano::evaluate(loaded.model, data.test, data.info.grid);
            std::cout << "test_rel_l2 = " << lano::kv::fmt_f64(err) << "\n";
            return 0;
        }

        if (zs->parsed()) {
            std::cout << "command = zero-shot\nckpt = " << zs_ckpt << "\ndata = " << zs_data
                      << "\n";
            auto loaded = lano::load_checkpoint<float>(zs_ckpt);
            echo_kv(lano::config_to_kv(loaded.model.config));
            auto data = lano::load_dataset<float>(zs_data);
            auto rows = lano::zero_shot_eval(loaded.model, data, zs_res);
            std::cout << "grid_h,grid_w,points,rel_l2,native\n";
            for (const auto& r : rows)
                std::cout << r.rows << "," << r.cols << "," << r.points << ","
                          << lano::kv::fmt_f64(r.rel_l2) << "," << (r.native ? 1 : 0) << "\n";
            if (!zs_out.empty()) {
                std::ostringstream cfgline;
                cfgline << "zero-shot ckpt=" << zs_ckpt << " data=" << zs_data;
                lano::write_zero_shot_csv(zs_out, cfgline.str(), rows);
                std::cout << "csv = " << zs_out << "\n";
            }
            return 0;
        }

        if (ba->parsed()) {
            std::ostringstream cfgline;
            cfgline << "bench-attn variants=" << ba_variants << " M=" << ba_m << " d=" << ba_d
                    << " H=" << ba_h << " reps=" << ba_opts.reps
                    << " warmups=" << ba_opts.warmups << " seed=" << ba_opts.seed;
            std::cout << "command = bench-attn\n" << cfgline.str() << "\n";
            std::vector<lano::SweepResult> sweeps;
            for (const auto& name : split_list(ba_variants)) {
                auto sweep = lano::scaling_sweep(lano::variant_from_name(name), ba_ns, ba_m,
                                                 ba_d, ba_h, ba_opts);
                for (const auto& r : sweep.rows)
                    std::cout << lano::variant_name(r.variant) << " N=" << r.n
                              << " wall_seconds=" << lano::kv::fmt_f64(r.wall_seconds)
                              << " flops=" << r.flops.total() << (r.flagged ? " FLAGGED" : "")
                              << "\n";
                std::cout << "slope_" << name << " = " << lano::kv::fmt_f64(sweep.slope)
                          << "\n";
                sweeps.push_back(std::move(sweep));
            }
            if (!ba_out.empty()) {
                lano::write_bench_csv(ba_out, cfgline.str(), sweeps);
                std::cout << "csv = " << ba_out << "\n";
            }
            if (!ba_plot.empty()) {
                lano::write_scaling_svg(ba_plot, sweeps);
                std::cout << "plot = " << ba_plot << "\n";
            }
            return 0;
        }

        if (ab->parsed()) {
            ab_cfg.schedule = lano::schedule_from_name(ab_schedule);
            ab_cfg.validate();
            auto data = lano::load_dataset<float>(ab_data);
            if (!ab_model.has_d_x) ab_model.cfg.d_x = data.info.d_x;
            if (!ab_model.has_d_a) ab_model.cfg.d_a = data.info.d_a;
            if (!ab_model.has_d_u) ab_model.cfg.d_u = data.info.d_u;
            ab_model.cfg.validate();
            if (ab_workdir.empty()) ab_workdir = ab_out + ".runs";
            std::cout << "command = ablate\nwhat = " << ab_what << "\ndata = " << ab_data
                      << "\n";
            echo_model_and_train(ab_model.cfg, ab_cfg);
            std::vector<lano::AblationRow> rows;
            std::ostringstream cfgline;
            if (ab_what == "components") {
                cfgline << "ablate components arms=" << ab_arms << " seeds=";
                for (auto s : ab_seeds) cfgline << s << ";";
                rows = lano::component_ablation(data, split_list(ab_arms), ab_seeds,
                                                ab_model.cfg, ab_cfg, ab_workdir);
            } else if (ab_what == "agents") {
                cfgline << "ablate agents counts=";
                for (auto m : ab_agents) cfgline << m << ";";
                cfgline << " seed=" << ab_cfg.seed;
                rows = lano::agent_count_ablation(data, ab_agents, ab_model.cfg, ab_cfg,
                                                  ab_workdir);
            } else {
                throw lano::ConfigError("--what must be components or agents, got '" +
                                        ab_what + "'");
            }
            std::cout << "arm,seed,param_count,test_rel_l2\n";
            for (const auto& r : rows)
                std::cout << r.arm << "," << r.seed << "," << r.param_count << ","
                          << lano::kv::fmt_f64(r.test_rel_l2) << "\n";
            lano::write_ablation_csv(ab_out, cfgline.str(), rows);
            std::cout << "csv = " << ab_out << "\n";
            return 0;
        }

        if (gc->parsed()) {
            std::cout << "command = grad-check\nthreshold = " << lano::kv::fmt_f64(gc_threshold)
                      << "\n";
            const double worst =
                lano::gradient_check_worst(gc_verbose ? &std::cout : nullptr);
            std::cout << "worst_relative_error = " << lano::kv::fmt_f64(worst) << "\n";
            if (worst >= gc_threshold) {
                std::cerr << "grad-check FAILED: " << worst << " >= " << gc_threshold << "\n";
                return 2;
            }
            std::cout << "grad-check passed\n";
            return 0;
        }
    } catch (const lano::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
