#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lano/attention.hpp"
#include "lano/dataset.hpp"
#include "lano/model.hpp"
#include "lano/train.hpp"

// Empirical verification of the complexity claims and the ablation /
// zero-shot protocols at desk scale. Sweeps time the attention cores (the
// work the closed-form counts describe) on random inputs; ablations run full
// training jobs per arm; zero-shot evaluates one checkpoint across bilinear
// resamplings of the test split.

namespace lano {

struct BenchResult {
    AttentionVariant variant;
    std::size_t n = 0, m = 0, d = 0, heads = 0;
    FlopCount flops;
    double wall_seconds = 0;  // median of the timed repetitions
    double cv = 0;            // stdev/mean of the repetitions
    bool flagged = false;     // still noisy after one retry
};

struct SweepResult {
    AttentionVariant variant;
    std::vector<BenchResult> rows;
    double slope = 0;  // least-squares log(time) vs log(N)
};

struct SweepOptions {
    int reps = 5;
    int warmups = 2;
    double min_quantum_seconds = 0.008;  // inner-repeat fast kernels up to this
    double cv_limit = 0.25;
    std::uint64_t seed = 0;
};

SweepResult scaling_sweep(AttentionVariant variant, const std::vector<std::size_t>& ns,
                          std::size_t m, std::size_t d, std::size_t heads,
                          const SweepOptions& opts = {});

/// CSV with one comment header line (exact config + seed), one row per
/// measurement and one trailing comment per fitted slope.
void write_bench_csv(const std::string& path, const std::string& config_line,
                     const std::vector<SweepResult>& sweeps);

/// Log-log wall-time-vs-N line plot.
void write_scaling_svg(const std::string& path, const std::vector<SweepResult>& sweeps);

// ---------------------------------------------------------------------------
// training-based protocols
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string arm;
    std::uint64_t seed = 0;
    std::uint64_t param_count = 0;
    double test_rel_l2 = 0;
};

/// One training run per agent count, fixed seed; reports the recorded test
/// metric and the parameter count.
std::vector<AblationRow> agent_count_ablation(const Dataset<float>& data,
                                              const std::vector<std::size_t>& agent_counts,
                                              const LanoConfig& base, const TrainConfig& tcfg,
                                              const std::string& work_dir);

/// Arms: reference | no_bias | no_dwc | no_bias_no_dwc | latent. One run per
/// arm per seed.
std::vector<AblationRow> component_ablation(const Dataset<float>& data,
                                            const std::vector<std::string>& arms,
                                            const std::vector<std::uint64_t>& seeds,
                                            const LanoConfig& base, const TrainConfig& tcfg,
                                            const std::string& work_dir);

LanoConfig apply_ablation_arm(LanoConfig cfg, const std::string& arm);

void write_ablation_csv(const std::string& path, const std::string& config_line,
                        const std::vector<AblationRow>& rows);

// ---------------------------------------------------------------------------
// zero-shot resolution transfer
// ---------------------------------------------------------------------------

struct ZeroShotRow {
    std::size_t rows = 0, cols = 0;  // evaluation grid
    std::size_t points = 0;
    double rel_l2 = 0;
    bool native = false;  // evaluated on the stored test split, unresampled
};

/// Forward-only evaluation of a checkpoint on the dataset's own resolution
/// plus bilinear resamplings to each target square resolution.
std::vector<ZeroShotRow> zero_shot_eval(const LanoModel<float>& model,
                                        const Dataset<float>& data,
                                        const std::vector<std::size_t>& resolutions);

void write_zero_shot_csv(const std::string& path, const std::string& config_line,
                         const std::vector<ZeroShotRow>& rows);

}  // namespace lano
