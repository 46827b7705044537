#include "focusflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_map>

#include "focusflow/error.hpp"
#include "focusflow/io.hpp"
#include "focusflow/random.hpp"

namespace focusflow {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& text) {
    if (text == "sgd") return OptimizerKind::sgd;
    if (text == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + text + "'");
}

std::string to_string(InitMode mode) {
    switch (mode) {
        case InitMode::scratch: return "scratch";
        case InitMode::fine_tune: return "fine-tune";
        case InitMode::fine_tune_branch_init: return "fine-tune-branch-init";
        case InitMode::prompt_tune: return "prompt-tune";
    }
    return "?";
}

InitMode parse_init_mode(const std::string& text) {
    for (InitMode m : {InitMode::scratch, InitMode::fine_tune, InitMode::fine_tune_branch_init, InitMode::prompt_tune}) {
        if (text == to_string(m)) return m;
    }
    throw ConfigError("unknown init mode '" + text + "'");
}

void TrainConfig::validate() const {
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(max_lr > 0.0) || !std::isfinite(max_lr)) throw ConfigError("max_lr must be positive");
    if (!(warmup > 0.0 && warmup < 1.0)) throw ConfigError("warmup must be in (0,1)");
    if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (optimizer.kind == OptimizerKind::adam &&
        !(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0 &&
          optimizer.eps > 0.0)) {
        throw ConfigError("adam parameters out of range");
    }
    if (init != InitMode::scratch && !checkpoint) throw ConfigError(to_string(init) + " requires a checkpoint path");
    loss.validate();
    if (mask.diameter < 1 || !(mask.sigma > 0.0)) throw ConfigError("mask diameter and sigma must be positive");
}

double lr_at(int step, const TrainConfig& cfg) {
    if (step < 0 || step >= cfg.iterations) throw Error("lr_at: step " + std::to_string(step) + " out of range");
    const double start = cfg.max_lr / 25.0;
    const double end = cfg.max_lr / 1000.0;
    const int last = cfg.iterations - 1;
    const int peak = std::min(last, static_cast<int>(std::lround(cfg.warmup * cfg.iterations)));
    if (step == peak) return cfg.max_lr;
    if (step < peak) {
        return start + (cfg.max_lr - start) * static_cast<double>(step) / peak;
    }
    return cfg.max_lr + (end - cfg.max_lr) * static_cast<double>(step - peak) / (last - peak);
}

double scale_weight(int level, int levels) { return 0.32 * std::pow(0.8, levels - 1 - level); }

namespace {

bool needs_cpcl(const LossConfig& loss) {
    return loss.kind == LossKind::cpcl || (loss.kind == LossKind::mix && loss.lambda != 0.0);
}

void copy_values(const Tensor& from, Tensor& to) {
    auto dst = to.mutable_values();
    const auto src = from.values();
    std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

InitResult apply_init_mode(FlowNet net, const TrainConfig& cfg) {
    InitResult out;
    if (cfg.init == InitMode::scratch) {
        out.net = std::move(net);
        return out;
    }
    if (!cfg.checkpoint) throw ConfigError(to_string(cfg.init) + " requires a checkpoint path");
    const FlowNet source = load_checkpoint(*cfg.checkpoint);
    std::map<std::string, Tensor> by_name;
    for (const auto& p : source.parameters()) by_name.emplace(p.name, p.tensor);
    for (auto& p : net.parameters()) {
        if (p.group != ParamGroup::ffe && p.group != ParamGroup::decoder) continue;
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw FormatError("checkpoint has no parameter " + p.name);
        if (it->second.shape() != p.tensor.shape()) {
            throw FormatError("checkpoint parameter " + p.name + " has shape " + shape_to_string(it->second.shape()) +
                              ", expected " + shape_to_string(p.tensor.shape()));
        }
        copy_values(it->second, p.tensor);
    }
    if (cfg.init == InitMode::fine_tune_branch_init) {
        if (net.cfe.size() != net.ffe.size()) throw ConfigError("branch init needs a condition encoder");
        for (std::size_t s = 0; s < net.ffe.size(); ++s) {
            const Tensor& fw = net.ffe[s].weight;
            Tensor& cw = net.cfe[s].weight;
            if (fw.shape() == cw.shape()) {
                copy_values(fw, cw);
            } else {
                // First layer: fold the image channels into the single mask channel.
                const int cout = fw.dim(0), cin = fw.dim(1), kk = fw.dim(2) * fw.dim(3);
                if (cw.dim(0) != cout || cw.dim(1) != 1 || cw.dim(2) * cw.dim(3) != kk) {
                    throw ShapeError("branch init: incompatible stage " + std::to_string(s));
                }
                auto dst = cw.mutable_values();
                const auto src = fw.values();
                for (int o = 0; o < cout; ++o) {
                    for (int k = 0; k < kk; ++k) {
                        double acc = 0.0;
                        for (int c = 0; c < cin; ++c) acc += src[(static_cast<std::size_t>(o) * cin + c) * kk + k];
                        dst[static_cast<std::size_t>(o) * kk + k] = static_cast<float>(acc);
                    }
                }
            }
            copy_values(net.ffe[s].bias, net.cfe[s].bias);
        }
    }
    if (cfg.init == InitMode::prompt_tune) out.frozen = {ParamGroup::ffe, ParamGroup::decoder};
    out.net = std::move(net);
    return out;
}

std::string TrainHistory::to_csv() const {
    std::ostringstream os;
    os << "step,lr,mix,lp,cpcl,aepe_all,aepe_kp\n";
    char buf[512];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step, r.lr, r.mix, r.lp, r.cpcl,
                      r.aepe_all, r.aepe_kp);
        os << buf;
    }
    return os.str();
}

namespace {

struct PreparedSample {
    KeyPointSet keypoints;
    Conditions conditions;
    std::optional<WeightMap> alpha;
};

class Preparer {
public:
    Preparer(const Dataset& data, const TrainConfig& cfg) : data_(data), cfg_(cfg) {}

    PreparedSample operator()(std::size_t index, const FlowNet& net) {
        const Sample& s = data_[index];
        PreparedSample p;
        if (cfg_.cache_keypoints) {
            auto it = cache_.find(index);
            if (it == cache_.end()) it = cache_.emplace(index, detect(cfg_.detector, s, index)).first;
            p.keypoints = it->second;
        } else {
            p.keypoints = detect(cfg_.detector, s, index);
        }
        p.conditions = make_conditions(net, s, p.keypoints);
        if (needs_cpcl(cfg_.loss) && !p.keypoints.empty()) {
            p.alpha = alpha_weights(p.keypoints, s.size(), cfg_.loss.mu, cfg_.loss.sigma);
        }
        return p;
    }

private:
    const Dataset& data_;
    const TrainConfig& cfg_;
    std::unordered_map<std::size_t, KeyPointSet> cache_;
};

struct BatchLoss {
    Tensor objective;
    double mix = 0.0, lp = 0.0, cpcl = 0.0;
};

BatchLoss batch_loss(const FlowNet& net, const Dataset& data, const std::vector<std::size_t>& batch,
                     const TrainConfig& cfg, Preparer& prepare) {
    BatchLoss out;
    std::vector<Tensor> terms;
    int cpcl_count = 0;
    for (std::size_t index : batch) {
        const Sample& s = data[index];
        const PreparedSample p = prepare(index, net);
        const FlowPrediction pred = forward(net, s.i1, s.i2, p.conditions.query, p.conditions.reference);
        // Without key points cpcl is undefined; such samples fall back to L_p.
        LossConfig lc = cfg.loss;
        if (!p.alpha) lc.kind = LossKind::photometric;
        const WeightMap empty_alpha;
        const WeightMap& alpha = p.alpha ? *p.alpha : empty_alpha;

        const int levels = static_cast<int>(pred.per_scale.size());
        if (cfg.multiscale && levels > 1) {
            for (int l = 0; l < levels; ++l) {
                terms.push_back(scale(mix_loss(s.flow, pred.per_scale[static_cast<std::size_t>(l)], alpha, lc),
                                      scale_weight(l, levels)));
            }
        } else {
            terms.push_back(mix_loss(s.flow, pred.flow, alpha, lc));
        }
        const double lp = photometric_loss(s.flow, pred.flow, cfg.loss.p).item();
        out.lp += lp;
        if (p.alpha) {
            out.cpcl += cpcl(s.flow, pred.flow, *p.alpha, cfg.loss.p).item();
            ++cpcl_count;
        }
        out.mix += lc.kind == LossKind::photometric ? lp : mix_loss(s.flow, pred.flow, alpha, lc).item();
    }
    Tensor total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    const double n = static_cast<double>(batch.size());
    out.objective = scale(total, 1.0 / n);
    out.mix /= n;
    out.lp /= n;
    out.cpcl = cpcl_count ? out.cpcl / cpcl_count : std::nan("");
    return out;
}

std::pair<double, double> heldout_aepe(const FlowNet& net, const Dataset& heldout, const DetectorSpec& detector) {
    ErrorPool all, kp;
    for (std::size_t i = 0; i < heldout.size(); ++i) {
        const Sample& s = heldout[i];
        const KeyPointSet pts = detect(detector, s, i);
        const Conditions c = make_conditions(net, s, pts);
        const FlowPrediction pred = forward(net, s.i1, s.i2, c.query, c.reference);
        all.add(s.flow, pred.flow, nullptr, &s.valid);
        if (!pts.empty()) kp.add(s.flow, pred.flow, &pts, &s.valid);
    }
    return {all.count ? all.mean() : std::nan(""), kp.count ? kp.mean() : std::nan("")};
}

}  // namespace

TrainResult train(FlowNet net, const Dataset& data, const TrainConfig& cfg, const std::set<ParamGroup>& frozen,
                  const Dataset* heldout, const StepCallback& on_step) {
    cfg.validate();
    if (data.empty()) throw Error("train: empty dataset");
    net.spec_.condition = cfg.mask;

    Dataset first_batch;
    if (!heldout) {
        for (std::size_t i = 0; i < data.size() && static_cast<int>(i) < cfg.batch_size; ++i) {
            first_batch.push_back(data[i]);
        }
        heldout = &first_batch;
    }

    std::vector<ParamRef> params;
    for (auto& p : net.parameters()) {
        if (frozen.count(p.group)) continue;
        p.tensor.set_requires_grad(true);
        params.push_back(p);
    }
    std::vector<std::vector<double>> m(params.size()), v(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params[i].tensor.numel(), 0.0);
        v[i].assign(params[i].tensor.numel(), 0.0);
    }

    Preparer prepare(data, cfg);
    TrainResult result;
    const int last = cfg.iterations - 1;
    for (int step = 0; step < cfg.iterations; ++step) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step)));
        std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch_size));
        for (auto& idx : batch) {
            idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(data.size()) - 1));
        }
        const double lr = lr_at(step, cfg);
        BatchLoss loss = batch_loss(net, data, batch, cfg, prepare);
        const double objective = loss.objective.item();
        if (!std::isfinite(objective)) {
            throw DivergenceError("non-finite loss at step " + std::to_string(step));
        }
        if (step % cfg.log_every == 0 || step == last) {
            const auto [aepe_all, aepe_kp] = heldout_aepe(net, *heldout, cfg.detector);
            result.history.records.push_back({step, lr, loss.mix, loss.lp, loss.cpcl, aepe_all, aepe_kp});
        }

        const Gradients grads = backward(loss.objective);
        loss = BatchLoss{};
        std::vector<Tensor> g(params.size());
        double sq = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            g[i] = grads.get(params[i].tensor);
            for (double x : g[i].values()) sq += x * x;
        }
        const double norm = std::sqrt(sq);
        if (!std::isfinite(norm)) throw DivergenceError("non-finite gradient at step " + std::to_string(step));
        double factor = 1.0;
        if (cfg.clip_norm && norm > *cfg.clip_norm) factor = *cfg.clip_norm / norm;

        const OptimizerConfig& opt = cfg.optimizer;
        const double bc1 = 1.0 - std::pow(opt.beta1, step + 1);
        const double bc2 = 1.0 - std::pow(opt.beta2, step + 1);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto w = params[i].tensor.mutable_values();
            const auto gi = g[i].values();
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double gk = gi[k] * factor;
                double delta;
                if (opt.kind == OptimizerKind::adam) {
                    m[i][k] = opt.beta1 * m[i][k] + (1.0 - opt.beta1) * gk;
                    v[i][k] = opt.beta2 * v[i][k] + (1.0 - opt.beta2) * gk * gk;
                    delta = lr * (m[i][k] / bc1) / (std::sqrt(v[i][k] / bc2) + opt.eps);
                } else {
                    m[i][k] = opt.momentum * m[i][k] + gk;
                    delta = lr * m[i][k];
                }
                w[k] = static_cast<float>(w[k] - delta);
            }
        }
        if (on_step) on_step({step, lr, objective, norm, norm * factor});
    }
    for (auto& p : params) p.tensor.set_requires_grad(false);
    result.net = std::move(net);
    return result;
}

}  // namespace focusflow
