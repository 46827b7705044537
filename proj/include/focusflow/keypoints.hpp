#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "focusflow/tensor.hpp"

namespace focusflow {

struct ImageSize {
    int height = 0;
    int width = 0;
    bool operator==(const ImageSize&) const = default;
};

struct KeyPoint {
    double x = 0.0;  // column, pixels
    double y = 0.0;  // row, pixels
    double score = 0.0;
    bool operator==(const KeyPoint&) const = default;
};

struct KeyPointSet {
    std::vector<KeyPoint> points;
    ImageSize size;
    std::string detector;

    std::size_t count() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

struct DetectorParams {
    int max_corners = 500;
    double quality_level = 0.01;
    double min_distance = 10.0;
};

// Accepts [H,W] or [1,H,W] tensors.
ImageSize image_size_of(const Tensor& image);

/// Minimum-eigenvalue corner response for every pixel: Sobel 3x3 gradients,
/// structure tensor summed over a 3x3 box, reflect-101 borders. Row-major [H*W].
std::vector<double> min_eigen_response(const Tensor& image);

/// Shi-Tomasi "good features to track": threshold at quality_level * max
/// response, 3x3 non-maximum suppression, then greedy selection in order of
/// decreasing response (ties by row-major index) keeping points at least
/// min_distance apart, capped at max_corners.
KeyPointSet detect_good_features(const Tensor& image, const DetectorParams& params);

/// n distinct integer pixels drawn uniformly without replacement.
KeyPointSet random_points(int height, int width, int n, std::uint64_t seed);

/// Key-point CSV: one `x,y,score` row per point, no header.
KeyPointSet load_keypoints(const std::filesystem::path& path, ImageSize size);
void write_keypoints(const KeyPointSet& points, const std::filesystem::path& path);

// Nearest pixel (row, col) of a key point, half-up rounding, clamped to the image.
struct PixelIndex {
    int row = 0;
    int col = 0;
    bool operator==(const PixelIndex&) const = default;
};
PixelIndex nearest_pixel(const KeyPoint& p, ImageSize size);
// Distinct rounded pixels in first-seen order.
std::vector<PixelIndex> unique_pixels(const KeyPointSet& points);

}  // namespace focusflow
