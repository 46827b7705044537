#pragma once

#include "focusflow/error.hpp"
#include "focusflow/keypoints.hpp"
#include "focusflow/tensor.hpp"

namespace focusflow {

// Displacement field [2,H,W] in pixels: channel 0 = u (horizontal),
// channel 1 = v (vertical).
class FlowField {
public:
    FlowField() = default;
    explicit FlowField(Tensor values) : values_(std::move(values)) {
        if (values_.rank() != 3 || values_.dim(0) != 2) {
            throw ShapeError("flow field must be [2,H,W], got " + shape_to_string(values_.shape()));
        }
    }

    static FlowField zeros(ImageSize size) { return FlowField(Tensor::zeros({2, size.height, size.width})); }

    const Tensor& tensor() const { return values_; }
    int height() const { return values_.dim(1); }
    int width() const { return values_.dim(2); }
    ImageSize size() const { return {height(), width()}; }

    double u(int y, int x) const { return values_.at(0, y, x); }
    double v(int y, int x) const { return values_.at(1, y, x); }

private:
    Tensor values_;
};

}  // namespace focusflow
