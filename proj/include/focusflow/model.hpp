#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "focusflow/flow.hpp"
#include "focusflow/masks.hpp"
#include "focusflow/ops.hpp"
#include "focusflow/tensor.hpp"

namespace focusflow {

enum class FusionKind { bidirectional, unidirectional, concat, none };

std::string to_string(FusionKind kind);
FusionKind parse_fusion_kind(const std::string& text);

struct ModelSpec {
    std::vector<int> widths{16, 32, 64};
    std::vector<int> strides{2, 2, 2};
    FusionKind fusion = FusionKind::bidirectional;
    int corr_radius = 4;     // 0 disables the cost volume
    int refine_convs = 1;    // hidden convs per refinement level; 0 = no refinement levels
    bool use_cfe = true;
    int image_channels = 1;
    int decoder_width = 32;
    // Condition encoding the network expects for its query mask. Carried in
    // checkpoints; not part of the parameter structure.
    MaskSettings condition;

    void validate() const;
    int stages() const { return static_cast<int>(widths.size()); }
    // Empty when the two specs have identical parameter layouts; otherwise a
    // description of the first difference.
    std::string structural_difference(const ModelSpec& other) const;
};

struct Conv {
    Tensor weight;  // [Cout,Cin,k,k]
    Tensor bias;    // [Cout]
    int stride = 1;
    int padding = 0;

    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
};

// 1x1 convolutions exchanging information between the frame and the
// condition streams of one encoder stage.
struct FusionModule {
    Conv to_frame;  // cond (or concat) -> frame
    Conv to_cond;   // frame (or concat) -> cond
};

enum class ParamGroup { ffe, cfe, fusion, decoder };
std::string to_string(ParamGroup group);

struct ParamRef {
    std::string name;
    ParamGroup group;
    Tensor tensor;  // aliases the network's storage
};

/// Encoder-decoder flow network with a conditional control encoder: a frame
/// encoder (FFE), a mirrored condition encoder (CFE) and per-stage fusion,
/// followed by an optional cost volume and a coarse-to-fine decoder.
///
/// Copies are deep; parameters are never shared between two FlowNet objects.
class FlowNet {
public:
    FlowNet() = default;
    FlowNet(const FlowNet& other);
    FlowNet& operator=(const FlowNet& other);
    FlowNet(FlowNet&&) noexcept = default;
    FlowNet& operator=(FlowNet&&) noexcept = default;

    const ModelSpec& spec() const { return spec_; }
    // Parameters in declaration order: FFE, CFE, fusion, decoder head,
    // refinement levels (coarse to fine); weight before bias.
    std::vector<ParamRef> parameters() const;
    std::size_t parameter_count() const;

    ModelSpec spec_;
    std::vector<Conv> ffe;
    std::vector<Conv> cfe;
    std::vector<FusionModule> fusion;
    std::vector<Conv> head;                 // 2 hidden convs + flow prediction
    std::vector<std::vector<Conv>> refine;  // per finer stage, coarse to fine
};

/// Seeded He-uniform initialization; fusion convs start as identity
/// (residual zero or [I|0] for concat). Values are rounded to 32-bit.
FlowNet build_model(const ModelSpec& spec, std::uint64_t seed);

// Sets every parameter to zero.
void zero_parameters(FlowNet& net);

/// One fusion step. Returns (frame', cond').
std::pair<Tensor, Tensor> fuse(const Tensor& frame_feat, const Tensor& cond_feat, const FusionModule* params,
                               FusionKind kind);

struct EncoderOutput {
    std::vector<Tensor> frame;  // per stage, after fusion
    std::vector<Tensor> cond;   // per stage, after fusion (empty without CFE)

    const Tensor& final_features() const { return frame.back(); }
};

EncoderOutput cce_forward(const FlowNet& net, const Tensor& frame, const ConditionMask& mask);

struct FlowPrediction {
    FlowField flow;                   // full resolution
    std::vector<FlowField> per_scale;  // each level upsampled to full resolution, coarse to fine; back() == flow
};

/// Query frame i1 with its condition mask, reference frame i2 with the
/// reference mask. Frames are [C,H,W] (or [H,W] for one channel).
FlowPrediction forward(const FlowNet& net, const Tensor& i1, const Tensor& i2, const ConditionMask& query_mask,
                       const ConditionMask& ref_mask);

// Total downsampling factor of the encoder.
int cumulative_stride(const ModelSpec& spec);

}  // namespace focusflow
