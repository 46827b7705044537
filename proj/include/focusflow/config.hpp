#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "focusflow/eval.hpp"
#include "focusflow/model.hpp"
#include "focusflow/synth.hpp"
#include "focusflow/trainer.hpp"

namespace focusflow {

inline constexpr const char* kFormatVersion = "focusflow-run/1";
// Default output root when no `out` key or --out flag is given.
inline constexpr const char* kOutputRootEnv = "FOCUSFLOW_OUT";

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out;

    SceneConfig scene;
    int train_samples = 1000;
    int eval_samples = 100;
    // Evaluation samples are taken from index eval_offset on of the same stream.
    int eval_offset = 100000;

    ModelSpec model;
    TrainConfig train;
    EvalOptions eval;

    void validate() const;
};

// RunConfig defaults with `out` taken from the environment (or "runs").
RunConfig default_run_config();

/// Applies one `key = value` setting. Throws ConfigError for unknown keys or
/// unparsable values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines with `#` comments into ordered pairs.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

// File settings first, then overrides (later wins).
RunConfig resolve_config(const std::filesystem::path* file,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

/// Every key with its resolved value, one per line, plus the format version.
std::string to_config_text(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace focusflow
