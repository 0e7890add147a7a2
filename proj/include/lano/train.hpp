#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lano/dataset.hpp"
#include "lano/losses.hpp"
#include "lano/model.hpp"
#include "lano/optim.hpp"
#include "lano/rng.hpp"

// The epoch driver: standardization from train statistics, shuffled
// mini-batches on one tape per step, AdamW with a scheduled learning rate,
// per-epoch train/test relative L2 logging, best-checkpoint tracking. All
// randomness flows from cfg.seed through labeled splits, so a rerun with the
// same config reproduces the metric columns bit for bit.

namespace lano {

struct TrainConfig {
    std::size_t epochs = 500;
    double init_lr = 1e-3;
    std::size_t batch_size = 4;
    Schedule schedule = Schedule::onecycle;
    double weight_decay = 1e-5;
    double gamma_grad = 0.1;  // weight of the gradient loss on grid datasets
    std::uint64_t seed = 0;
    std::string precision = "f32";

    void validate() const {
        if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
        if (!(init_lr > 0) && init_lr != 0)
            throw ConfigError("train config: init_lr must be >= 0");
        if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
        if (gamma_grad < 0) throw ConfigError("train config: gamma_grad must be >= 0");
        if (precision != "f32" && precision != "f64")
            throw ConfigError("train config: precision must be f32 or f64");
    }
};

inline kv::Map train_config_to_kv(const TrainConfig& c, const std::string& prefix = "") {
    kv::Map m;
    m.emplace_back(prefix + "epochs", std::to_string(c.epochs));
    m.emplace_back(prefix + "init_lr", kv::fmt_f64(c.init_lr));
    m.emplace_back(prefix + "batch_size", std::to_string(c.batch_size));
    m.emplace_back(prefix + "schedule", schedule_name(c.schedule));
    m.emplace_back(prefix + "weight_decay", kv::fmt_f64(c.weight_decay));
    m.emplace_back(prefix + "gamma_grad", kv::fmt_f64(c.gamma_grad));
    m.emplace_back(prefix + "seed", std::to_string(c.seed));
    m.emplace_back(prefix + "precision", c.precision);
    return m;
}

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double lr = 0;          // learning rate at the first step of the epoch
    double train_rel_l2 = 0;
    double test_rel_l2 = 0;
    double wall_seconds = 0;  // cumulative
};

struct TrainResult {
    std::vector<EpochMetrics> log;
    double best_test_rel_l2 = 0;
    std::size_t best_epoch = 0;
    std::string best_checkpoint;
    std::string last_checkpoint;
    std::string metrics_csv;
};

inline std::string metrics_csv_row(const EpochMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.3f", m.epoch, m.lr, m.train_rel_l2,
                  m.test_rel_l2, m.wall_seconds);
    return buf;
}

/// Mean test-split relative L2 of a model, in physical units.
template <typename T>
double evaluate(const LanoModel<T>& model, const std::vector<Sample<T>>& split,
                const std::optional<GridShape>& grid) {
    if (split.empty()) throw ConfigError("evaluate: empty split");
    double acc = 0;
    for (const auto& s : split)
        acc += static_cast<double>(relative_l2(model.forward(s.x, s.a, grid), s.u));
    return acc / static_cast<double>(split.size());
}

/// Algorithm: per epoch, shuffle the train split, then for each batch build
/// one tape over the batch samples, backpropagate the mean total loss and
/// take an AdamW step at the scheduled learning rate. The logged train
/// metric is the epoch mean of the per-sample relative L2 (without the
/// gradient term); the test metric is a full evaluation pass.
template <typename T>
TrainResult train(LanoModel<T>& model, const Dataset<T>& data, const TrainConfig& cfg,
                  const std::string& out_dir, std::ostream* progress = nullptr) {
    cfg.validate();
    if (data.train.empty()) throw ConfigError("train: dataset has no training samples");
    if (data.info.d_x != model.config.d_x || data.info.d_a != model.config.d_a ||
        data.info.d_u != model.config.d_u)
        throw ConfigError("train: dataset channels (d_x=" + std::to_string(data.info.d_x) +
                          ", d_a=" + std::to_string(data.info.d_a) + ", d_u=" +
                          std::to_string(data.info.d_u) + ") do not match the model config");

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    model.x_mean = data.stats.x_mean;
    model.x_std = data.stats.x_std;
    if (model.config.d_a) {
        model.a_mean = data.stats.a_mean;
        model.a_std = data.stats.a_std;
    }
    model.u_mean = data.stats.u_mean;
    model.u_std = data.stats.u_std;

    const std::optional<GridShape>& grid = data.info.grid;
    const T gamma = grid ? static_cast<T>(cfg.gamma_grad) : T(0);

    std::vector<ad::Ptr<T>> params;
    for (const auto& [name, p] : model.parameters()) params.push_back(p);
    AdamW<T> opt(params, {0.9, 0.999, 1e-8, cfg.weight_decay});

    const std::size_t train_n = data.train.size();
    const std::size_t steps_per_epoch = (train_n + cfg.batch_size - 1) / cfg.batch_size;
    const std::uint64_t total_steps = cfg.epochs * steps_per_epoch;

    TrainResult result;
    result.metrics_csv = (fs::path(out_dir) / "metrics.csv").string();
    result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
    result.last_checkpoint = (fs::path(out_dir) / "last.ckpt").string();
    std::ofstream csv(result.metrics_csv, std::ios::binary);
    if (!csv) throw IoError("cannot write metrics log '" + result.metrics_csv + "'");
    csv << "epoch,lr,train_rel_l2,test_rel_l2,wall_seconds\n";
    csv.flush();

    Rng shuffle_root = Rng(cfg.seed).split("shuffle");
    std::vector<std::size_t> order(train_n);
    std::iota(order.begin(), order.end(), std::size_t(0));

    const auto t0 = std::chrono::steady_clock::now();
    std::uint64_t step = 0;
    result.best_test_rel_l2 = -1;

    auto save_with_record = [&](const std::string& path, double test_metric,
                                std::size_t epoch) {
        kv::Map extra = train_config_to_kv(cfg, "train.");
        extra.emplace_back("recorded.test_rel_l2", kv::fmt_f64(test_metric));
        extra.emplace_back("recorded.epoch", std::to_string(epoch));
        save_checkpoint(model, path, extra);
    };

    double last_test = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng erng = shuffle_root.split(epoch);
        for (std::size_t i = train_n; i > 1; --i)
            std::swap(order[i - 1], order[erng.below(i)]);

        const double epoch_lr = lr_schedule(step, total_steps, cfg.schedule, cfg.init_lr);
        double train_metric = 0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(lo + cfg.batch_size, train_n);
            model.zero_grad();
            ad::Ptr<T> batch_loss;
            for (std::size_t i = lo; i < hi; ++i) {
                const Sample<T>& s = data.train[order[i]];
                ad::Ptr<T> pred = model.forward_graph(s.x, s.a, grid);
                ad::Ptr<T> rel = ad::relative_l2(pred, s.u);
                train_metric += static_cast<double>(rel->value[0]);
                ad::Ptr<T> loss = rel;
                if (gamma != T(0)) {
                    Tensor<T> dt = lano::grid_diff(s.u, *grid);
                    loss = ad::add(loss,
                                   ad::scale(ad::relative_l2(ad::grid_diff(pred, *grid), dt),
                                             gamma));
                }
                batch_loss = batch_loss ? ad::add(batch_loss, loss) : loss;
            }
            batch_loss = ad::scale(batch_loss, T(1) / T(hi - lo));
            const double loss_value = static_cast<double>(batch_loss->value[0]);
            const double lr = lr_schedule(step, total_steps, cfg.schedule, cfg.init_lr);
            if (!std::isfinite(loss_value))
                throw TrainDivergedError(
                    "train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(b) + ", lr " + kv::fmt_f64(lr),
                    lr, static_cast<int>(epoch), static_cast<int>(b));
            ad::backward(batch_loss);
            opt.step(lr);
            ++step;
        }
        train_metric /= static_cast<double>(train_n);

        last_test = data.test.empty() ? train_metric : evaluate(model, data.test, grid);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        EpochMetrics em{epoch, epoch_lr, train_metric, last_test, wall};
        result.log.push_back(em);
        csv << metrics_csv_row(em) << "\n";
        csv.flush();
        if (progress && (epoch % 10 == 0 || epoch == 1 || epoch == cfg.epochs))
            (*progress) << "epoch " << epoch << "/" << cfg.epochs << "  lr " << epoch_lr
                        << "  train " << train_metric << "  test " << last_test << "\n";

        if (result.best_test_rel_l2 < 0 || last_test < result.best_test_rel_l2) {
            result.best_test_rel_l2 = last_test;
            result.best_epoch = epoch;
            save_with_record(result.best_checkpoint, last_test, epoch);
        }
    }
    save_with_record(result.last_checkpoint, last_test, cfg.epochs);
    return result;
}

}  // namespace lano
