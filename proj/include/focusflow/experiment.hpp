#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "focusflow/config.hpp"
#include "focusflow/eval.hpp"
#include "focusflow/trainer.hpp"

namespace focusflow {

// Training and evaluation splits of the synthetic stream for cfg.seed.
Dataset make_train_set(const RunConfig& cfg);
Dataset make_eval_set(const RunConfig& cfg);

// Seed streams derived from the run seed.
std::uint64_t model_seed(const RunConfig& cfg);
std::uint64_t batch_seed(const RunConfig& cfg);

struct RunOutput {
    FlowNet net;
    TrainHistory history;
};

/// Builds, initializes and trains the configured model. When `dir` is
/// non-empty, writes checkpoint.bin, history.csv and config.txt there.
RunOutput run_training(const RunConfig& cfg, const Dataset& train_set, const std::filesystem::path& dir = {});

// The two arms of the main comparison.
void set_baseline(RunConfig& cfg);  // frame encoder only, photometric loss
void set_focus(RunConfig& cfg);     // conditional encoder, mix loss, point mask, mu 1

enum class AblationAxis { pattern, loss, lambda, mu, fusion, init };
std::string to_string(AblationAxis axis);
AblationAxis parse_ablation_axis(const std::string& text);

struct AblationRow {
    std::string variant;
    std::string model;  // "focus" or "baseline"
    std::string seed;   // run seed, or "median" for aggregates
    double aepe_all = 0.0;
    double aepe_kp = 0.0;
    double l_c = 0.0;
};

struct AblationCell {
    std::string variant;
    std::string model;
    RunConfig cfg;
};

struct AblationResult {
    AblationAxis axis = AblationAxis::pattern;
    std::vector<AblationRow> rows;     // one per (variant, model, seed)
    std::vector<AblationRow> medians;  // one per (variant, model)

    std::string to_csv() const;          // per-seed rows
    std::string summary_csv() const;     // medians
};

/// Variants of `axis` applied to `base` (seed not yet set). `both_models`
/// adds the baseline arm for the loss axis.
std::vector<AblationCell> ablation_cells(AblationAxis axis, const RunConfig& base, bool both_models);

/// Trains and evaluates every cell for seeds base.seed .. base.seed+seeds-1.
/// Cell outputs go to <dir>/<variant>/<model>/seed-<n> when dir is non-empty.
/// The init axis first trains a baseline per seed as the pretrained source.
AblationResult run_ablation(AblationAxis axis, const RunConfig& base, int seeds, bool both_models,
                            const std::filesystem::path& dir);

}  // namespace focusflow
