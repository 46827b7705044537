// focusflow command-line front end.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "focusflow/config.hpp"
#include "focusflow/error.hpp"
#include "focusflow/eval.hpp"
#include "focusflow/experiment.hpp"
#include "focusflow/gradsuite.hpp"
#include "focusflow/io.hpp"
#include "focusflow/keypoints.hpp"
#include "focusflow/masks.hpp"

namespace fs = std::filesystem;
using namespace focusflow;

namespace {

struct CommonOptions {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("-c,--config", o.config, "key = value config file");
    app->add_option("-s,--set", o.sets, "override, key=value (repeatable)");
    app->add_option("-o,--out", o.out, "output directory");
    app->add_option("--seed", o.seed, "run seed");
}

// defaults < config file < --set < --out/--seed
RunConfig resolve(const CommonOptions& o) {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        auto trim = [](std::string t) {
            t.erase(0, t.find_first_not_of(' '));
            t.erase(t.find_last_not_of(' ') + 1);
            return t;
        };
        overrides.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (o.seed) overrides.emplace_back("seed", std::to_string(*o.seed));
    if (!o.out.empty()) overrides.emplace_back("out", o.out);
    const fs::path file(o.config);
    RunConfig cfg = resolve_config(o.config.empty() ? nullptr : &file, overrides);
    cfg.validate();
    return cfg;
}

// Output directory for a command: --out as given, otherwise <root>/<name>-<seed>.
fs::path output_dir(const CommonOptions& o, const RunConfig& cfg, const std::string& name) {
    fs::path dir = o.out.empty() ? cfg.out / (name + "-" + std::to_string(cfg.seed)) : fs::path(o.out);
    fs::create_directories(dir);
    write_text_atomic(dir / "config.txt", to_config_text(cfg));
    return dir;
}

std::string index_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    return buf;
}

void export_split(const Dataset& data, const DetectorSpec& detector, const fs::path& dir, std::size_t first) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Sample& s = data[i];
        const std::string stem = index_name(first + i);
        write_pgm(s.i1, dir / (stem + "_i1.pgm"));
        write_pgm(s.i2, dir / (stem + "_i2.pgm"));
        write_pgm(s.valid, dir / (stem + "_valid.pgm"));
        write_flo(s.flow, dir / (stem + ".flo"));
        write_keypoints(detect(detector, s, first + i), dir / (stem + "_kp.csv"));
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Key-point focused optical flow: data, training, evaluation"};
    app.require_subcommand(1);

    CommonOptions gen_o;
    auto* gen = app.add_subcommand("gen-data", "write synthetic frames, flows and key points");
    add_common(gen, gen_o);

    std::string det_image, det_out;
    DetectorParams det_params;
    auto* det = app.add_subcommand("detect", "Shi-Tomasi key points of one PGM image");
    det->add_option("image", det_image, "input PGM")->required();
    det->add_option("-o,--out", det_out, "output CSV")->required();
    det->add_option("--max-corners", det_params.max_corners);
    det->add_option("--quality", det_params.quality_level);
    det->add_option("--min-distance", det_params.min_distance);

    std::string mask_kp, mask_image, mask_out, mask_pattern = "point";
    MaskSettings mask_settings;
    auto* mk = app.add_subcommand("make-mask", "condition mask from a key-point CSV");
    mk->add_option("keypoints", mask_kp, "key-point CSV")->required();
    mk->add_option("--image", mask_image, "query frame PGM (sets the size; needed for context/frame)")->required();
    mk->add_option("--pattern", mask_pattern);
    mk->add_option("--diameter", mask_settings.diameter);
    mk->add_option("--sigma", mask_settings.sigma);
    mk->add_option("-o,--out", mask_out, "output PGM")->required();

    CommonOptions train_o;
    auto* tr = app.add_subcommand("train", "train one model; writes checkpoint.bin and history.csv");
    add_common(tr, train_o);

    CommonOptions eval_o;
    std::string eval_ckpt;
    auto* ev = app.add_subcommand("eval", "metrics of one checkpoint on the evaluation split");
    add_common(ev, eval_o);
    ev->add_option("checkpoint", eval_ckpt)->required();

    CommonOptions cmp_o;
    std::vector<std::string> cmp_ckpts;
    auto* cmp = app.add_subcommand("compare", "metrics of several checkpoints on one evaluation split");
    add_common(cmp, cmp_o);
    cmp->add_option("checkpoints", cmp_ckpts)->required();

    CommonOptions abl_o;
    std::string abl_axis, abl_models = "focus";
    int abl_seeds = 5;
    auto* abl = app.add_subcommand("ablate", "sweep one axis across seeds");
    add_common(abl, abl_o);
    abl->add_option("--axis", abl_axis, "pattern | loss | lambda | mu | fusion | init")->required();
    abl->add_option("--seeds", abl_seeds);
    abl->add_option("--models", abl_models, "focus | both (loss axis)");

    std::uint64_t gc_seed = 1;
    int gc_count = 20;
    double gc_tol = 1e-4;
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
    gc->add_option("--seed", gc_seed, "first seed");
    gc->add_option("--seeds", gc_count, "number of seeds");
    gc->add_option("--tolerance", gc_tol);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (*gen) {
        const RunConfig cfg = resolve(gen_o);
        const fs::path dir = output_dir(gen_o, cfg, "data");
        export_split(make_train_set(cfg), cfg.train.detector, dir / "train", 0);
        export_split(make_eval_set(cfg), cfg.train.detector, dir / "eval", static_cast<std::size_t>(cfg.eval_offset));
        std::cout << "wrote " << cfg.train_samples << " training and " << cfg.eval_samples << " evaluation samples to "
                  << dir.string() << "\n";
    } else if (*det) {
        const KeyPointSet pts = detect_good_features(read_pgm(det_image), det_params);
        write_keypoints(pts, det_out);
        std::cout << pts.count() << " key points\n";
    } else if (*mk) {
        const Tensor image = read_pgm(mask_image);
        const ImageSize size = image_size_of(image);
        mask_settings.pattern = parse_mask_pattern(mask_pattern);
        const ConditionMask mask = make_mask(load_keypoints(mask_kp, size), size, mask_settings, image);
        write_pgm(mask.values, mask_out);
    } else if (*tr) {
        const RunConfig cfg = resolve(train_o);
        const fs::path dir = output_dir(train_o, cfg, "train");
        const RunOutput run = run_training(cfg, make_train_set(cfg), dir);
        const auto& last = run.history.records;
        if (!last.empty()) {
            std::printf("step %d mix %.6g aepe_all %.6g aepe_kp %.6g\n", last.back().step, last.back().mix,
                        last.back().aepe_all, last.back().aepe_kp);
        }
        std::cout << "checkpoint " << (dir / "checkpoint.bin").string() << "\n";
    } else if (*ev) {
        const RunConfig cfg = resolve(eval_o);
        const fs::path dir = output_dir(eval_o, cfg, "eval");
        MetricsReport report;
        report.rows.push_back(
            evaluate_model(load_checkpoint(eval_ckpt), fs::path(eval_ckpt).stem().string(), make_eval_set(cfg), cfg.eval));
        write_text_atomic(dir / "metrics.csv", report.to_csv());
        write_text_atomic(dir / "metrics.json", report.to_json());
        write_text_atomic(dir / "metrics.svg", report.to_svg());
        std::cout << report.to_csv();
    } else if (*cmp) {
        const RunConfig cfg = resolve(cmp_o);
        const fs::path dir = output_dir(cmp_o, cfg, "compare");
        std::vector<fs::path> paths(cmp_ckpts.begin(), cmp_ckpts.end());
        const MetricsReport report = compare(paths, make_eval_set(cfg), cfg.eval);
        write_text_atomic(dir / "report.csv", report.to_csv());
        write_text_atomic(dir / "report.json", report.to_json());
        write_text_atomic(dir / "report.svg", report.to_svg());
        std::cout << report.to_csv();
    } else if (*abl) {
        const RunConfig cfg = resolve(abl_o);
        if (abl_models != "focus" && abl_models != "both") throw ConfigError("--models must be focus or both");
        const AblationAxis axis = parse_ablation_axis(abl_axis);
        const fs::path dir = output_dir(abl_o, cfg, "ablate-" + abl_axis);
        const AblationResult result = run_ablation(axis, cfg, abl_seeds, abl_models == "both", dir);
        write_text_atomic(dir / "ablate.csv", result.to_csv());
        write_text_atomic(dir / "summary.csv", result.summary_csv());
        std::cout << result.summary_csv();
    } else if (*gc) {
        const GradSuiteReport report = run_grad_suite(gc_seed, gc_count);
        const GradCase& worst = report.worst();
        std::printf("worst relative error %.3e (%s, seed %llu) over %zu checks\n", worst.error, worst.name.c_str(),
                    static_cast<unsigned long long>(worst.seed), report.cases.size());
        return worst.error <= gc_tol ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "focusflow: " << e.what() << "\n";
        return 2;
    }
}
