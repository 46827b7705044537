#include "focusflow/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "focusflow/error.hpp"
#include "focusflow/io.hpp"
#include "focusflow/random.hpp"

namespace focusflow {

Dataset make_train_set(const RunConfig& cfg) { return gen_dataset(cfg.scene, cfg.train_samples, cfg.seed, 0); }

Dataset make_eval_set(const RunConfig& cfg) {
    return gen_dataset(cfg.scene, cfg.eval_samples, cfg.seed, cfg.eval_offset);
}

std::uint64_t model_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, 1'000'001); }
std::uint64_t batch_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, 1'000'002); }

RunOutput run_training(const RunConfig& cfg, const Dataset& train_set, const std::filesystem::path& dir) {
    cfg.validate();
    TrainConfig tcfg = cfg.train;
    tcfg.seed = batch_seed(cfg);
    const Dataset heldout = gen_dataset(cfg.scene, std::min(cfg.eval_samples, tcfg.batch_size), cfg.seed,
                                        cfg.eval_offset);
    InitResult init = apply_init_mode(build_model(cfg.model, model_seed(cfg)), tcfg);
    TrainResult result = train(std::move(init.net), train_set, tcfg, init.frozen, &heldout);
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        save_checkpoint(result.net, dir / "checkpoint.bin");
        write_text_atomic(dir / "history.csv", result.history.to_csv());
        write_text_atomic(dir / "config.txt", to_config_text(cfg));
    }
    return {std::move(result.net), std::move(result.history)};
}

void set_baseline(RunConfig& cfg) {
    cfg.model.use_cfe = false;
    cfg.train.loss.kind = LossKind::photometric;
}

void set_focus(RunConfig& cfg) {
    cfg.model.use_cfe = true;
    cfg.model.fusion = FusionKind::bidirectional;
    cfg.model.condition.pattern = MaskPattern::point;
    cfg.train.mask = cfg.model.condition;
    cfg.train.loss.kind = LossKind::mix;
    cfg.train.loss.lambda = 1.0;
    cfg.train.loss.mu = 1;
    cfg.train.loss.sigma = 0.01;
}

std::string to_string(AblationAxis axis) {
    switch (axis) {
        case AblationAxis::pattern: return "pattern";
        case AblationAxis::loss: return "loss";
        case AblationAxis::lambda: return "lambda";
        case AblationAxis::mu: return "mu";
        case AblationAxis::fusion: return "fusion";
        case AblationAxis::init: return "init";
    }
    return "?";
}

AblationAxis parse_ablation_axis(const std::string& text) {
    for (AblationAxis a : {AblationAxis::pattern, AblationAxis::loss, AblationAxis::lambda, AblationAxis::mu,
                           AblationAxis::fusion, AblationAxis::init}) {
        if (text == to_string(a)) return a;
    }
    throw ConfigError("unknown ablation axis '" + text + "'");
}

namespace {

std::string real_text(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double median(std::vector<double> v) {
    std::erase_if(v, [](double x) { return !std::isfinite(x); });
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<AblationCell> ablation_cells(AblationAxis axis, const RunConfig& base, bool both_models) {
    std::vector<AblationCell> cells;
    RunConfig focus = base;
    set_focus(focus);
    switch (axis) {
        case AblationAxis::pattern:
            for (MaskPattern p : {MaskPattern::point, MaskPattern::neighbor_e, MaskPattern::neighbor_g,
                                  MaskPattern::context, MaskPattern::frame}) {
                RunConfig c = focus;
                c.model.condition.pattern = p;
                c.train.mask = c.model.condition;
                cells.push_back({to_string(p), "focus", c});
            }
            break;
        case AblationAxis::loss:
            for (LossKind k : {LossKind::photometric, LossKind::cpcl, LossKind::mix}) {
                RunConfig c = focus;
                c.train.loss.kind = k;
                cells.push_back({to_string(k), "focus", c});
                if (both_models) {
                    RunConfig b = c;
                    b.model.use_cfe = false;
                    cells.push_back({to_string(k), "baseline", b});
                }
            }
            break;
        case AblationAxis::lambda:
            for (double l : {0.1, 1.0, 10.0, 100.0}) {
                RunConfig c = focus;
                c.train.loss.lambda = l;
                cells.push_back({"lambda=" + real_text(l), "focus", c});
            }
            break;
        case AblationAxis::mu:
            for (int m : {1, 3, 5, 9}) {
                RunConfig c = focus;
                c.train.loss.mu = m;
                c.train.loss.sigma = sigma_for_mu(m);
                cells.push_back({"mu=" + std::to_string(m), "focus", c});
            }
            break;
        case AblationAxis::fusion:
            for (FusionKind f : {FusionKind::bidirectional, FusionKind::unidirectional, FusionKind::concat,
                                 FusionKind::none}) {
                RunConfig c = focus;
                c.model.fusion = f;
                cells.push_back({to_string(f), "focus", c});
            }
            break;
        case AblationAxis::init:
            for (InitMode m : {InitMode::scratch, InitMode::fine_tune, InitMode::fine_tune_branch_init,
                               InitMode::prompt_tune}) {
                RunConfig c = focus;
                c.train.init = m;
                cells.push_back({to_string(m), "focus", c});
            }
            break;
    }
    return cells;
}

AblationResult run_ablation(AblationAxis axis, const RunConfig& base, int seeds, bool both_models,
                            const std::filesystem::path& dir) {
    if (seeds < 1) throw ConfigError("ablate: need at least one seed");
    AblationResult result;
    result.axis = axis;
    const auto cells = ablation_cells(axis, base, both_models);
    std::filesystem::path root = dir;
    if (root.empty() && axis == AblationAxis::init) {
        root = std::filesystem::temp_directory_path() /
               ("focusflow-ablate-" + std::to_string(derive_seed(base.seed, static_cast<std::uint64_t>(seeds))));
    }
    for (int k = 0; k < seeds; ++k) {
        const std::uint64_t seed = base.seed + static_cast<std::uint64_t>(k);
        const std::string seed_dir = "seed-" + std::to_string(seed);
        RunConfig seeded = base;
        seeded.seed = seed;
        const Dataset train_set = make_train_set(seeded);
        const Dataset eval_set = make_eval_set(seeded);
        std::filesystem::path pretrained;
        if (axis == AblationAxis::init) {
            RunConfig pre = seeded;
            set_baseline(pre);
            pre.train.init = InitMode::scratch;
            pretrained = root / "pretrain" / seed_dir;
            run_training(pre, train_set, pretrained);
        }
        for (const auto& cell : cells) {
            RunConfig c = cell.cfg;
            c.seed = seed;
            if (c.train.init != InitMode::scratch) c.train.checkpoint = pretrained / "checkpoint.bin";
            const std::filesystem::path out = dir.empty() ? std::filesystem::path() : dir / cell.variant / cell.model / seed_dir;
            const RunOutput run = run_training(c, train_set, out);
            const MetricsRow m = evaluate_model(run.net, cell.variant, eval_set, c.eval);
            const auto kp = m.aepe_kp.find(c.train.detector.tag);
            result.rows.push_back({cell.variant, cell.model, std::to_string(seed), m.aepe_all,
                                   kp == m.aepe_kp.end() ? std::nan("") : kp->second, m.l_c});
        }
    }
    if (dir.empty() && axis == AblationAxis::init) std::filesystem::remove_all(root);

    for (const auto& cell : cells) {
        std::vector<double> all, kp, lc;
        for (const auto& r : result.rows) {
            if (r.variant != cell.variant || r.model != cell.model) continue;
            all.push_back(r.aepe_all);
            kp.push_back(r.aepe_kp);
            lc.push_back(r.l_c);
        }
        result.medians.push_back({cell.variant, cell.model, "median", median(all), median(kp), median(lc)});
    }
    return result;
}

namespace {

std::string rows_csv(AblationAxis axis, const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "axis,variant,model,seed,aepe_all,aepe_kp,l_c\n";
    for (const auto& r : rows) {
        os << to_string(axis) << ',' << r.variant << ',' << r.model << ',' << r.seed << ',' << real_text(r.aepe_all)
           << ',' << real_text(r.aepe_kp) << ',' << real_text(r.l_c) << '\n';
    }
    return os.str();
}

}  // namespace

std::string AblationResult::to_csv() const { return rows_csv(axis, rows); }

std::string AblationResult::summary_csv() const { return rows_csv(axis, medians); }

}  // namespace focusflow
