#include "focusflow/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>

#include "focusflow/error.hpp"
#include "focusflow/io.hpp"

namespace focusflow {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + text + "'");
    return v;
}

int parse_int(const std::string& key, const std::string& text) { return parse_number<int>(key, text); }
double parse_real(const std::string& key, const std::string& text) { return parse_number<double>(key, text); }
std::uint64_t parse_u64(const std::string& key, const std::string& text) {
    return parse_number<std::uint64_t>(key, text);
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

std::string real_text(double v) {
    // Shortest text that parses back to the same double.
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string list_text(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct Entry {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define FF_INT(name, field)                                                                  \
    Entry {                                                                                  \
        name, [](const RunConfig& c) { return std::to_string(c.field); },                    \
            [](RunConfig& c, const std::string& v) { c.field = parse_int(name, v); }         \
    }
#define FF_REAL(name, field)                                                                 \
    Entry {                                                                                  \
        name, [](const RunConfig& c) { return real_text(c.field); },                         \
            [](RunConfig& c, const std::string& v) { c.field = parse_real(name, v); }        \
    }
#define FF_BOOL(name, field)                                                                 \
    Entry {                                                                                  \
        name, [](const RunConfig& c) { return bool_text(c.field); },                         \
            [](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); }        \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
        {"out", [](const RunConfig& c) { return c.out.string(); },
         [](RunConfig& c, const std::string& v) { c.out = v; }},

        FF_INT("data.height", scene.height),
        FF_INT("data.width", scene.width),
        FF_INT("data.min_sprites", scene.min_sprites),
        FF_INT("data.max_sprites", scene.max_sprites),
        FF_INT("data.min_sprite_size", scene.min_sprite_size),
        FF_INT("data.max_sprite_size", scene.max_sprite_size),
        FF_INT("data.max_displacement", scene.max_displacement),
        FF_INT("data.background_shift", scene.background_shift),
        FF_INT("data.texture_cell", scene.texture_cell),
        {"data.texture_policy",
         [](const RunConfig& c) {
             return std::string(c.scene.texture_policy == TexturePolicy::shared ? "shared" : "per-sample");
         },
         [](RunConfig& c, const std::string& v) {
             if (v == "shared") {
                 c.scene.texture_policy = TexturePolicy::shared;
             } else if (v == "per-sample") {
                 c.scene.texture_policy = TexturePolicy::per_sample;
             } else {
                 throw ConfigError("data.texture_policy: expected shared or per-sample, got '" + v + "'");
             }
         }},
        {"data.texture_seed", [](const RunConfig& c) { return std::to_string(c.scene.texture_seed); },
         [](RunConfig& c, const std::string& v) { c.scene.texture_seed = parse_u64("data.texture_seed", v); }},
        FF_REAL("data.noise_std", scene.noise_std),
        FF_INT("data.train_samples", train_samples),
        FF_INT("data.eval_samples", eval_samples),
        FF_INT("data.eval_offset", eval_offset),

        {"model.widths", [](const RunConfig& c) { return list_text(c.model.widths); },
         [](RunConfig& c, const std::string& v) { c.model.widths = parse_int_list("model.widths", v); }},
        {"model.strides", [](const RunConfig& c) { return list_text(c.model.strides); },
         [](RunConfig& c, const std::string& v) { c.model.strides = parse_int_list("model.strides", v); }},
        {"model.fusion", [](const RunConfig& c) { return to_string(c.model.fusion); },
         [](RunConfig& c, const std::string& v) { c.model.fusion = parse_fusion_kind(v); }},
        FF_INT("model.corr_radius", model.corr_radius),
        FF_INT("model.refine_convs", model.refine_convs),
        FF_BOOL("model.use_cfe", model.use_cfe),
        FF_INT("model.image_channels", model.image_channels),
        FF_INT("model.decoder_width", model.decoder_width),

        {"mask.pattern", [](const RunConfig& c) { return to_string(c.model.condition.pattern); },
         [](RunConfig& c, const std::string& v) { c.model.condition.pattern = parse_mask_pattern(v); }},
        FF_INT("mask.diameter", model.condition.diameter),
        FF_REAL("mask.sigma", model.condition.sigma),

        {"loss.kind", [](const RunConfig& c) { return to_string(c.train.loss.kind); },
         [](RunConfig& c, const std::string& v) { c.train.loss.kind = parse_loss_kind(v); }},
        {"loss.p", [](const RunConfig& c) { return std::to_string(static_cast<int>(c.train.loss.p)); },
         [](RunConfig& c, const std::string& v) {
             const int p = parse_int("loss.p", v);
             if (p != 1 && p != 2) throw ConfigError("loss.p must be 1 or 2");
             c.train.loss.p = static_cast<Norm>(p);
         }},
        FF_REAL("loss.lambda", train.loss.lambda),
        FF_INT("loss.mu", train.loss.mu),
        FF_REAL("loss.sigma", train.loss.sigma),

        FF_INT("train.iterations", train.iterations),
        FF_INT("train.batch_size", train.batch_size),
        FF_REAL("train.max_lr", train.max_lr),
        FF_REAL("train.warmup", train.warmup),
        {"train.optimizer", [](const RunConfig& c) { return to_string(c.train.optimizer.kind); },
         [](RunConfig& c, const std::string& v) { c.train.optimizer.kind = parse_optimizer_kind(v); }},
        FF_REAL("train.beta1", train.optimizer.beta1),
        FF_REAL("train.beta2", train.optimizer.beta2),
        FF_REAL("train.eps", train.optimizer.eps),
        FF_REAL("train.momentum", train.optimizer.momentum),
        {"train.clip_norm",
         [](const RunConfig& c) { return c.train.clip_norm ? real_text(*c.train.clip_norm) : std::string("none"); },
         [](RunConfig& c, const std::string& v) {
             if (v == "none") {
                 c.train.clip_norm.reset();
             } else {
                 c.train.clip_norm = parse_real("train.clip_norm", v);
             }
         }},
        {"train.init", [](const RunConfig& c) { return to_string(c.train.init); },
         [](RunConfig& c, const std::string& v) { c.train.init = parse_init_mode(v); }},
        {"train.checkpoint",
         [](const RunConfig& c) { return c.train.checkpoint ? c.train.checkpoint->string() : std::string(); },
         [](RunConfig& c, const std::string& v) {
             if (v.empty()) {
                 c.train.checkpoint.reset();
             } else {
                 c.train.checkpoint = v;
             }
         }},
        FF_INT("train.log_every", train.log_every),
        FF_BOOL("train.cache_keypoints", train.cache_keypoints),
        FF_BOOL("train.multiscale", train.multiscale),

        {"detector.tag", [](const RunConfig& c) { return c.train.detector.tag; },
         [](RunConfig& c, const std::string& v) {
             if (v != "gf" && v != "file") throw ConfigError("detector.tag must be gf or file");
             c.train.detector.tag = v;
         }},
        FF_INT("detector.max_corners", train.detector.params.max_corners),
        FF_REAL("detector.quality_level", train.detector.params.quality_level),
        FF_REAL("detector.min_distance", train.detector.params.min_distance),
        {"detector.dir", [](const RunConfig& c) { return c.train.detector.dir.string(); },
         [](RunConfig& c, const std::string& v) { c.train.detector.dir = v; }},

        FF_INT("eval.lc_samples", eval.lc_samples),
        FF_INT("eval.pca_k", eval.pca_k),
        {"eval.seed", [](const RunConfig& c) { return std::to_string(c.eval.seed); },
         [](RunConfig& c, const std::string& v) { c.eval.seed = parse_u64("eval.seed", v); }},
    };
    return table;
}

#undef FF_INT
#undef FF_REAL
#undef FF_BOOL

// Settings shared between sections are mirrored after every change.
void sync(RunConfig& cfg) {
    cfg.train.mask = cfg.model.condition;
    cfg.eval.detectors = {cfg.train.detector};
}

}  // namespace

void RunConfig::validate() const {
    scene.validate();
    model.validate();
    train.validate();
    if (train_samples < 1) throw ConfigError("data.train_samples must be >= 1");
    if (eval_samples < 1) throw ConfigError("data.eval_samples must be >= 1");
    if (eval_offset < train_samples) throw ConfigError("data.eval_offset must not overlap the training samples");
    if (eval.pca_k < 1) throw ConfigError("eval.pca_k must be >= 1");
    if (eval.lc_samples < 0) throw ConfigError("eval.lc_samples must be >= 0");
    if (train.detector.tag == "file" && train.detector.dir.empty()) throw ConfigError("detector.dir is required");
}

RunConfig default_run_config() {
    RunConfig cfg;
    const char* root = std::getenv(kOutputRootEnv);
    cfg.out = root && *root ? root : "runs";
    sync(cfg);
    return cfg;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& e : entries()) {
        if (e.key == key) {
            e.set(cfg, value);
            sync(cfg);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
    }
    return out;
}

RunConfig resolve_config(const std::filesystem::path* file,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg = default_run_config();
    if (file) {
        const auto bytes = read_file(*file);
        for (const auto& [k, v] : parse_config_text(std::string(bytes.begin(), bytes.end()))) {
            set_config_value(cfg, k, v);
        }
    }
    for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
    return cfg;
}

std::string to_config_text(const RunConfig& cfg) {
    std::string out = std::string("# ") + kFormatVersion + "\n";
    for (const auto& e : entries()) out += e.key + " = " + e.get(cfg) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& e : entries()) keys.push_back(e.key);
    return keys;
}

}  // namespace focusflow
