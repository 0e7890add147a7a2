#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lano/autodiff.hpp"
#include "lano/tensor.hpp"

namespace lano {

// ---------------------------------------------------------------------------
// learning-rate schedules
// ---------------------------------------------------------------------------

enum class Schedule { cosine, onecycle };

inline const char* schedule_name(Schedule s) {
    return s == Schedule::cosine ? "cosine" : "onecycle";
}

inline Schedule schedule_from_name(const std::string& s) {
    if (s == "cosine") return Schedule::cosine;
    if (s == "onecycle") return Schedule::onecycle;
    throw ConfigError("unknown schedule '" + s + "' (expected cosine or onecycle)");
}

/// cosine: init * 0.5 * (1 + cos(pi * step/total)).
/// onecycle: linear warm-up from init/25 to init over the first 30% of steps,
/// then cosine decay to init/1e4.
inline double lr_schedule(std::uint64_t step, std::uint64_t total_steps, Schedule kind,
                          double init_lr) {
    if (total_steps == 0 || step >= total_steps)
        throw ConfigError("lr_schedule: step " + std::to_string(step) +
                          " out of range for total " + std::to_string(total_steps));
    constexpr double kPi = 3.14159265358979323846;
    if (kind == Schedule::cosine)
        return init_lr * 0.5 *
               (1.0 + std::cos(kPi * static_cast<double>(step) /
                               static_cast<double>(total_steps)));
    const std::uint64_t up = static_cast<std::uint64_t>(0.3 * static_cast<double>(total_steps));
    const double lo = init_lr / 25.0;
    const double end = init_lr / 1e4;
    if (up > 0 && step < up)
        return lo + (init_lr - lo) * static_cast<double>(step) / static_cast<double>(up);
    const double progress =
        static_cast<double>(step - up) / static_cast<double>(total_steps - up);
    return end + (init_lr - end) * 0.5 * (1.0 + std::cos(kPi * progress));
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

/// First/second moment state for one parameter tensor.
template <typename T>
struct MomentPair {
    Tensor<T> m;
    Tensor<T> v;
};

/// Decoupled-weight-decay Adam. The decay multiplies parameters by
/// (1 - lr * wd) before the moment update; moments are bias-corrected.
template <typename T>
class AdamW {
  public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW() = default;

    AdamW(std::vector<ad::Ptr<T>> params, Options opts)
        : params_(std::move(params)), opts_(opts) {
        state_.reserve(params_.size());
        for (const auto& p : params_)
            state_.push_back({Tensor<T>(p->value.shape()), Tensor<T>(p->value.shape())});
    }

    std::uint64_t step_count() const { return step_; }

    /// One update from the gradients currently held by the parameters.
    /// Parameters without an accumulated gradient are treated as grad = 0.
    void step(double lr) {
        ++step_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
        const T decay = static_cast<T>(1.0 - lr * opts_.weight_decay);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& p = params_[i]->value;
            MomentPair<T>& s = state_[i];
            const bool has_grad = params_[i]->has_grad();
            const Tensor<T>& g = params_[i]->grad;
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double gj = has_grad ? static_cast<double>(g[j]) : 0.0;
                if (opts_.weight_decay != 0.0) p[j] *= decay;
                const double m = opts_.beta1 * static_cast<double>(s.m[j]) +
                                 (1.0 - opts_.beta1) * gj;
                const double v = opts_.beta2 * static_cast<double>(s.v[j]) +
                                 (1.0 - opts_.beta2) * gj * gj;
                s.m[j] = static_cast<T>(m);
                s.v[j] = static_cast<T>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                p[j] = static_cast<T>(static_cast<double>(p[j]) -
                                      lr * mhat / (std::sqrt(vhat) + opts_.eps));
            }
        }
    }

    void zero_grad() const {
        for (const auto& p : params_) p->clear_grad();
    }

  private:
    std::vector<ad::Ptr<T>> params_;
    Options opts_;
    std::vector<MomentPair<T>> state_;
    std::uint64_t step_ = 0;
};

}  // namespace lano
