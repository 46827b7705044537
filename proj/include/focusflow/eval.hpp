#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "focusflow/flow.hpp"
#include "focusflow/keypoints.hpp"
#include "focusflow/masks.hpp"
#include "focusflow/model.hpp"
#include "focusflow/synth.hpp"

namespace focusflow {

// ---- shared evaluation pipeline ---------------------------------------------

// Where evaluation/conditioning key points come from.
struct DetectorSpec {
    std::string tag = "gf";      // "gf" (Shi-Tomasi) or "file"
    DetectorParams params;       // for gf
    std::filesystem::path dir;   // for file: <dir>/<sample index>.csv
};

KeyPointSet detect(const DetectorSpec& detector, const Sample& sample, std::size_t sample_index);

struct Conditions {
    ConditionMask query;
    ConditionMask reference;
};

// Query mask built from `keypoints` with the network's condition settings
// on the query frame; the reference mask is all ones.
Conditions make_conditions(const FlowNet& net, const Sample& sample, const KeyPointSet& keypoints);

// ---- metrics -------------------------------------------------------------------

/// Mean 2-norm endpoint error over the evaluated pixels: all pixels, or the
/// rounded key-point pixels when `points` is given, intersected with `valid`
/// ([1,H,W] or [H,W], nonzero = valid). Throws when nothing is evaluated.
double aepe(const FlowField& gt, const FlowField& pred, const KeyPointSet* points = nullptr,
            const Tensor* valid = nullptr);

// Running pooled mean for dataset-level AEPE (every evaluated pixel counts once).
struct ErrorPool {
    double sum = 0.0;
    std::size_t count = 0;

    // Adds the same pixels aepe() would evaluate; returns how many were added.
    std::size_t add(const FlowField& gt, const FlowField& pred, const KeyPointSet* points, const Tensor* valid);
    double mean() const;
};

using FeatureRows = std::vector<std::vector<double>>;

/// Centers the rows and projects them on the top-k covariance eigenvectors
/// (each eigenvector signed so its first nonzero component is positive).
FeatureRows pca_project(const FeatureRows& rows, int k);

/// Distance between the centroids of the two row sets after a joint PCA fit.
double centroid_distance(const FeatureRows& key_rows, const FeatureRows& random_rows, int k);

/// Bilinear samples of a [C,h,w] feature map at image coordinates divided by
/// `stride` (clamped to the map).
FeatureRows sample_features(const Tensor& features, const KeyPointSet& points, int stride);

/// Embedding-centroid distance between key points and random points in the
/// final encoder stage of the query frame.
double lc_metric(const FlowNet& net, const Tensor& image, const ConditionMask& mask, const KeyPointSet& key_points,
                 const KeyPointSet& random_points, int k = 2);

// ---- reports -------------------------------------------------------------------

struct MetricsRow {
    std::string model;
    double aepe_all = 0.0;
    std::map<std::string, double> aepe_kp;  // per detector tag
    double l_c = 0.0;
    std::size_t params = 0;
    std::string config_digest;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;

    std::string to_csv() const;
    std::string to_json() const;
    std::string to_svg() const;
};

struct EvalOptions {
    std::vector<DetectorSpec> detectors{DetectorSpec{}};
    int lc_samples = 20;  // samples contributing to L_c (0 disables)
    int pca_k = 2;
    std::uint64_t seed = 0;  // random point sets for L_c
};

MetricsRow evaluate_model(const FlowNet& net, const std::string& tag, const Dataset& data, const EvalOptions& options);

MetricsReport compare(const std::vector<std::filesystem::path>& checkpoints, const Dataset& data,
                      const EvalOptions& options);

// FNV-1a 64 over a byte string, as 16 hex digits.
std::string digest_hex(std::string_view bytes);

}  // namespace focusflow
