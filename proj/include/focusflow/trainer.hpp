#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "focusflow/eval.hpp"
#include "focusflow/losses.hpp"
#include "focusflow/masks.hpp"
#include "focusflow/model.hpp"
#include "focusflow/synth.hpp"

namespace focusflow {

enum class OptimizerKind { sgd, adam };
std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& text);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double momentum = 0.0;  // sgd only
};

enum class InitMode { scratch, fine_tune, fine_tune_branch_init, prompt_tune };
std::string to_string(InitMode mode);
InitMode parse_init_mode(const std::string& text);

struct TrainConfig {
    int iterations = 2000;
    int batch_size = 4;
    double max_lr = 2e-3;
    double warmup = 0.05;
    OptimizerConfig optimizer;
    std::optional<double> clip_norm = 1.0;
    LossConfig loss;
    MaskSettings mask;
    DetectorSpec detector;
    InitMode init = InitMode::scratch;
    std::optional<std::filesystem::path> checkpoint;
    std::uint64_t seed = 0;
    int log_every = 100;
    bool cache_keypoints = false;
    bool multiscale = true;

    void validate() const;
};

// One-cycle schedule: max_lr/25 at step 0, linear up to max_lr at step
// round(warmup * iterations), linear down to max_lr/1000 at the last step.
double lr_at(int step, const TrainConfig& cfg);

// Loss weight of prediction level `level` (0 = coarsest) out of `levels`.
double scale_weight(int level, int levels);

struct InitResult {
    FlowNet net;
    std::set<ParamGroup> frozen;
};

/// Applies the init regime to a freshly seeded network. The fine-tune modes
/// copy FFE and decoder parameters from cfg.checkpoint by name.
InitResult apply_init_mode(FlowNet net, const TrainConfig& cfg);

struct HistoryRecord {
    int step = 0;
    double lr = 0.0;
    double mix = 0.0;
    double lp = 0.0;
    double cpcl = 0.0;
    double aepe_all = 0.0;
    double aepe_kp = 0.0;
};

struct TrainHistory {
    std::vector<HistoryRecord> records;

    std::string to_csv() const;
};

struct StepInfo {
    int step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;          // before clipping
    double clipped_grad_norm = 0.0;  // after clipping
};

using StepCallback = std::function<void(const StepInfo&)>;

struct TrainResult {
    FlowNet net;
    TrainHistory history;
};

/// Minibatch training. Batches are drawn with replacement from `data`
/// using a per-step seed. History rows are written at step 0, every
/// log_every steps and at the last step; AEPE columns use `heldout` (the
/// first batch of `data` when null). Parameters in `frozen` are never
/// written. The network's condition settings are set to cfg.mask.
TrainResult train(FlowNet net, const Dataset& data, const TrainConfig& cfg, const std::set<ParamGroup>& frozen = {},
                  const Dataset* heldout = nullptr, const StepCallback& on_step = {});

}  // namespace focusflow
