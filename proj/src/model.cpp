#include "focusflow/model.hpp"

#include <cmath>
#include <sstream>

#include "focusflow/error.hpp"
#include "focusflow/ops.hpp"
#include "focusflow/random.hpp"

namespace focusflow {

namespace {

constexpr double kLeakySlope = 0.1;

Tensor as_chw(const Tensor& image) {
    if (image.rank() == 2) return image.reshaped({1, image.dim(0), image.dim(1)});
    if (image.rank() != 3) throw ShapeError("expected an image [C,H,W] or [H,W], got " + shape_to_string(image.shape()));
    return image;
}

Conv make_conv(int cin, int cout, int k, int stride, int padding) {
    Conv c;
    c.weight = Tensor::zeros({cout, cin, k, k});
    c.bias = Tensor::zeros({cout});
    c.stride = stride;
    c.padding = padding;
    return c;
}

Conv clone(const Conv& c) {
    Conv out = c;
    out.weight = c.weight.detach();
    out.bias = c.bias.detach();
    return out;
}

void fill_he_uniform(Tensor& weight, std::uint64_t seed, double gain) {
    const Shape& s = weight.shape();
    const int fan_in = s[1] * s[2] * s[3];
    const double bound = gain * std::sqrt(6.0 / fan_in);
    Rng rng(seed);
    for (auto& v : weight.mutable_values()) v = static_cast<float>(rng.uniform(-bound, bound));
}

int head_input_channels(const ModelSpec& spec) {
    const int c = spec.widths.back();
    if (spec.corr_radius > 0) {
        const int side = 2 * spec.corr_radius + 1;
        return side * side + c;
    }
    return 2 * c;
}

}  // namespace

std::string to_string(FusionKind kind) {
    switch (kind) {
        case FusionKind::bidirectional: return "conv1x1-bidirectional";
        case FusionKind::unidirectional: return "conv1x1-unidirectional";
        case FusionKind::concat: return "concat";
        case FusionKind::none: return "none";
    }
    return "unknown";
}

FusionKind parse_fusion_kind(const std::string& text) {
    for (auto k : {FusionKind::bidirectional, FusionKind::unidirectional, FusionKind::concat, FusionKind::none}) {
        if (to_string(k) == text) return k;
    }
    if (text == "bidirectional") return FusionKind::bidirectional;
    if (text == "unidirectional") return FusionKind::unidirectional;
    throw ConfigError("unknown fusion kind '" + text + "'");
}

std::string to_string(ParamGroup group) {
    switch (group) {
        case ParamGroup::ffe: return "ffe";
        case ParamGroup::cfe: return "cfe";
        case ParamGroup::fusion: return "fusion";
        case ParamGroup::decoder: return "decoder";
    }
    return "unknown";
}

void ModelSpec::validate() const {
    if (widths.empty()) throw ConfigError("model needs at least one stage");
    if (widths.size() != strides.size()) throw ConfigError("model widths and strides differ in length");
    for (int w : widths) {
        if (w < 1) throw ConfigError("model widths must be positive");
    }
    for (int s : strides) {
        if (s < 1) throw ConfigError("model strides must be positive");
    }
    if (corr_radius < 0) throw ConfigError("correlation radius must be nonnegative");
    if (refine_convs < 0) throw ConfigError("refinement conv count must be nonnegative");
    if (image_channels < 1) throw ConfigError("image channel count must be positive");
    if (decoder_width < 1) throw ConfigError("decoder width must be positive");
}

std::string ModelSpec::structural_difference(const ModelSpec& other) const {
    std::ostringstream os;
    if (widths.size() != other.widths.size()) {
        os << "stage count " << widths.size() << " vs " << other.widths.size();
        return os.str();
    }
    for (std::size_t s = 0; s < widths.size(); ++s) {
        if (widths[s] != other.widths[s] || strides[s] != other.strides[s]) {
            os << "stage " << s << ": width/stride " << widths[s] << "/" << strides[s] << " vs " << other.widths[s]
               << "/" << other.strides[s];
            return os.str();
        }
    }
    if (use_cfe != other.use_cfe) return "condition encoder presence differs";
    if (fusion != other.fusion && use_cfe) return "fusion kind " + to_string(fusion) + " vs " + to_string(other.fusion);
    if (corr_radius != other.corr_radius) return "correlation radius differs";
    if (refine_convs != other.refine_convs) return "refinement conv count differs";
    if (image_channels != other.image_channels) return "image channel count differs";
    if (decoder_width != other.decoder_width) return "decoder width differs";
    return {};
}

int cumulative_stride(const ModelSpec& spec) {
    int s = 1;
    for (int v : spec.strides) s *= v;
    return s;
}

FlowNet::FlowNet(const FlowNet& other) : spec_(other.spec_) {
    for (const auto& c : other.ffe) ffe.push_back(clone(c));
    for (const auto& c : other.cfe) cfe.push_back(clone(c));
    for (const auto& f : other.fusion) fusion.push_back({clone(f.to_frame), clone(f.to_cond)});
    for (const auto& c : other.head) head.push_back(clone(c));
    for (const auto& level : other.refine) {
        std::vector<Conv> copy;
        for (const auto& c : level) copy.push_back(clone(c));
        refine.push_back(std::move(copy));
    }
}

FlowNet& FlowNet::operator=(const FlowNet& other) {
    if (this != &other) *this = FlowNet(other);
    return *this;
}

std::vector<ParamRef> FlowNet::parameters() const {
    std::vector<ParamRef> out;
    auto push = [&](const std::string& prefix, ParamGroup group, const Conv& c) {
        out.push_back({prefix + ".weight", group, c.weight});
        out.push_back({prefix + ".bias", group, c.bias});
    };
    for (std::size_t s = 0; s < ffe.size(); ++s) push("ffe." + std::to_string(s), ParamGroup::ffe, ffe[s]);
    for (std::size_t s = 0; s < cfe.size(); ++s) push("cfe." + std::to_string(s), ParamGroup::cfe, cfe[s]);
    for (std::size_t s = 0; s < fusion.size(); ++s) {
        push("fusion." + std::to_string(s) + ".to_frame", ParamGroup::fusion, fusion[s].to_frame);
        push("fusion." + std::to_string(s) + ".to_cond", ParamGroup::fusion, fusion[s].to_cond);
    }
    for (std::size_t i = 0; i < head.size(); ++i) push("head." + std::to_string(i), ParamGroup::decoder, head[i]);
    for (std::size_t l = 0; l < refine.size(); ++l) {
        for (std::size_t i = 0; i < refine[l].size(); ++i) {
            push("refine." + std::to_string(l) + "." + std::to_string(i), ParamGroup::decoder, refine[l][i]);
        }
    }
    return out;
}

std::size_t FlowNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

FlowNet build_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    FlowNet net;
    net.spec_ = spec;
    const int stages = spec.stages();
    for (int s = 0; s < stages; ++s) {
        const int cin = s == 0 ? spec.image_channels : spec.widths[static_cast<std::size_t>(s - 1)];
        net.ffe.push_back(make_conv(cin, spec.widths[static_cast<std::size_t>(s)], 3,
                                    spec.strides[static_cast<std::size_t>(s)], 1));
    }
    if (spec.use_cfe) {
        for (int s = 0; s < stages; ++s) {
            const int cin = s == 0 ? 1 : spec.widths[static_cast<std::size_t>(s - 1)];
            net.cfe.push_back(make_conv(cin, spec.widths[static_cast<std::size_t>(s)], 3,
                                        spec.strides[static_cast<std::size_t>(s)], 1));
        }
        if (spec.fusion != FusionKind::none) {
            for (int s = 0; s < stages; ++s) {
                const int c = spec.widths[static_cast<std::size_t>(s)];
                const int cin = spec.fusion == FusionKind::concat ? 2 * c : c;
                FusionModule f{make_conv(cin, c, 1, 1, 0), make_conv(cin, c, 1, 1, 0)};
                if (spec.fusion == FusionKind::concat) {
                    // [I | 0]: each stream starts as its own identity.
                    for (Tensor* w : {&f.to_frame.weight, &f.to_cond.weight}) {
                        auto v = w->mutable_values();
                        for (int o = 0; o < c; ++o) v[static_cast<std::size_t>(o) * cin + o] = 1.0;
                    }
                }
                net.fusion.push_back(std::move(f));
            }
        }
    }
    const int d = spec.decoder_width;
    net.head.push_back(make_conv(head_input_channels(spec), d, 3, 1, 1));
    net.head.push_back(make_conv(d, d, 3, 1, 1));
    net.head.push_back(make_conv(d, 2, 3, 1, 1));
    if (spec.refine_convs > 0) {
        for (int s = stages - 2; s >= 0; --s) {
            std::vector<Conv> level;
            int cin = 2 * spec.widths[static_cast<std::size_t>(s)] + 2;
            for (int i = 0; i < spec.refine_convs; ++i) {
                level.push_back(make_conv(cin, d, 3, 1, 1));
                cin = d;
            }
            level.push_back(make_conv(d, 2, 3, 1, 1));
            net.refine.push_back(std::move(level));
        }
    }

    // Seeded initialization of every conv weight except fusion; prediction
    // convs get a reduced gain so the initial flow is small.
    std::uint64_t index = 0;
    auto init_stack = [&](std::vector<Conv>& convs, bool last_is_prediction) {
        for (std::size_t i = 0; i < convs.size(); ++i) {
            const bool prediction = last_is_prediction && i + 1 == convs.size();
            fill_he_uniform(convs[i].weight, derive_seed(seed, index++), prediction ? 0.1 : 1.0);
        }
    };
    init_stack(net.ffe, false);
    init_stack(net.cfe, false);
    init_stack(net.head, true);
    for (auto& level : net.refine) init_stack(level, true);
    return net;
}

void zero_parameters(FlowNet& net) {
    for (auto& p : net.parameters()) {
        Tensor t = p.tensor;
        for (auto& v : t.mutable_values()) v = 0.0;
    }
}

std::pair<Tensor, Tensor> fuse(const Tensor& frame_feat, const Tensor& cond_feat, const FusionModule* params,
                               FusionKind kind) {
    if (frame_feat.shape() != cond_feat.shape()) {
        throw ShapeError("fuse: frame features " + shape_to_string(frame_feat.shape()) +
                         " and condition features " + shape_to_string(cond_feat.shape()) + " differ");
    }
    if (kind == FusionKind::none) return {frame_feat, cond_feat};
    if (!params) throw Error("fuse: missing fusion parameters");
    switch (kind) {
        case FusionKind::bidirectional:
            return {add(frame_feat, params->to_frame(cond_feat)), add(cond_feat, params->to_cond(frame_feat))};
        case FusionKind::unidirectional:
            return {add(frame_feat, params->to_frame(cond_feat)), cond_feat};
        case FusionKind::concat: {
            const Tensor fc[] = {frame_feat, cond_feat};
            const Tensor cf[] = {cond_feat, frame_feat};
            return {params->to_frame(concat_channels(fc)), params->to_cond(concat_channels(cf))};
        }
        case FusionKind::none:
            break;
    }
    return {frame_feat, cond_feat};
}

EncoderOutput cce_forward(const FlowNet& net, const Tensor& frame, const ConditionMask& mask) {
    const Tensor x0 = as_chw(frame);
    if (x0.dim(0) != net.spec().image_channels) {
        throw ShapeError("cce_forward: frame has " + std::to_string(x0.dim(0)) + " channels, model expects " +
                         std::to_string(net.spec().image_channels));
    }
    if (mask.values.shape() != Shape{1, x0.dim(1), x0.dim(2)}) {
        throw ShapeError("cce_forward: mask " + shape_to_string(mask.values.shape()) + " does not match frame " +
                         shape_to_string(x0.shape()));
    }
    EncoderOutput out;
    Tensor x = x0;
    Tensor c = mask.values;
    const bool conditioned = !net.cfe.empty();
    for (std::size_t s = 0; s < net.ffe.size(); ++s) {
        x = leaky_relu(net.ffe[s](x), kLeakySlope);
        if (conditioned) {
            c = leaky_relu(net.cfe[s](c), kLeakySlope);
            const FusionModule* params = net.fusion.empty() ? nullptr : &net.fusion[s];
            std::tie(x, c) = fuse(x, c, params, net.spec().fusion);
            out.cond.push_back(c);
        }
        out.frame.push_back(x);
    }
    return out;
}

FlowPrediction forward(const FlowNet& net, const Tensor& i1, const Tensor& i2, const ConditionMask& query_mask,
                       const ConditionMask& ref_mask) {
    const Tensor a = as_chw(i1);
    const Tensor b = as_chw(i2);
    if (a.shape() != b.shape()) {
        throw ShapeError("forward: frames differ in shape " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
    const int height = a.dim(1), width = a.dim(2);
    const EncoderOutput e1 = cce_forward(net, a, query_mask);
    const EncoderOutput e2 = cce_forward(net, b, ref_mask);

    const Tensor& q = e1.final_features();
    const Tensor& r = e2.final_features();
    Tensor head_in;
    if (net.spec().corr_radius > 0) {
        const Tensor parts[] = {correlation_volume(q, r, net.spec().corr_radius), q};
        head_in = concat_channels(parts);
    } else {
        const Tensor parts[] = {q, r};
        head_in = concat_channels(parts);
    }
    Tensor h = leaky_relu(net.head[0](head_in), kLeakySlope);
    h = leaky_relu(net.head[1](h), kLeakySlope);
    Tensor flow = net.head[2](h);

    FlowPrediction pred;
    auto to_full = [&](const Tensor& f) {
        const double factors[] = {static_cast<double>(width) / f.dim(2), static_cast<double>(height) / f.dim(1)};
        return FlowField(scale_channels(bilinear_resize(f, height, width), factors));
    };
    pred.per_scale.push_back(to_full(flow));

    const int stages = net.spec().stages();
    for (std::size_t l = 0; l < net.refine.size(); ++l) {
        const std::size_t s = static_cast<std::size_t>(stages - 2) - l;
        const Tensor& feat1 = e1.frame[s];
        const Tensor& feat2 = e2.frame[s];
        const int fh = feat1.dim(1), fw = feat1.dim(2);
        const double factors[] = {static_cast<double>(fw) / flow.dim(2), static_cast<double>(fh) / flow.dim(1)};
        const Tensor up = scale_channels(bilinear_resize(flow, fh, fw), factors);
        const Tensor parts[] = {feat1, feat2, up};
        Tensor x = concat_channels(parts);
        const auto& level = net.refine[l];
        for (std::size_t i = 0; i + 1 < level.size(); ++i) x = leaky_relu(level[i](x), kLeakySlope);
        flow = add(up, level.back()(x));
        pred.per_scale.push_back(to_full(flow));
    }
    pred.flow = pred.per_scale.back();
    for (double v : pred.flow.tensor().values()) {
        if (!std::isfinite(v)) throw DivergenceError("forward: non-finite flow prediction");
    }
    return pred;
}

}  // namespace focusflow
