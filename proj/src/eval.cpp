#include "focusflow/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include "json.hpp"
#include <set>
#include <sstream>

#include "focusflow/error.hpp"
#include "focusflow/io.hpp"
#include "focusflow/random.hpp"

namespace focusflow {

KeyPointSet detect(const DetectorSpec& detector, const Sample& sample, std::size_t sample_index) {
    if (detector.tag == "gf") return detect_good_features(sample.i1, detector.params);
    if (detector.tag == "file") {
        KeyPointSet pts = load_keypoints(detector.dir / (std::to_string(sample_index) + ".csv"), sample.size());
        pts.detector = "file";
        return pts;
    }
    throw ConfigError("unknown detector '" + detector.tag + "'");
}

Conditions make_conditions(const FlowNet& net, const Sample& sample, const KeyPointSet& keypoints) {
    const ImageSize size = sample.size();
    return {make_mask(keypoints, size, net.spec().condition, sample.i1), reference_mask(size)};
}

namespace {

// Row-major indices of the pixels an AEPE evaluates.
std::vector<std::size_t> evaluated_pixels(const FlowField& gt, const FlowField& pred, const KeyPointSet* points,
                                          const Tensor* valid) {
    if (gt.size() != pred.size()) throw ShapeError("aepe: flow fields differ in size");
    const ImageSize size = gt.size();
    const std::size_t plane = static_cast<std::size_t>(size.height) * size.width;
    if (valid && valid->numel() != plane) throw ShapeError("aepe: valid mask size mismatch");
    std::vector<std::size_t> out;
    auto keep = [&](std::size_t i) { return !valid || valid->values()[i] != 0.0; };
    if (points) {
        KeyPointSet pts = *points;
        pts.size = size;
        for (const auto& p : unique_pixels(pts)) {
            const std::size_t i = static_cast<std::size_t>(p.row) * size.width + p.col;
            if (keep(i)) out.push_back(i);
        }
    } else {
        for (std::size_t i = 0; i < plane; ++i) {
            if (keep(i)) out.push_back(i);
        }
    }
    return out;
}

double endpoint_at(const FlowField& gt, const FlowField& pred, std::size_t i) {
    const std::size_t plane = static_cast<std::size_t>(gt.height()) * gt.width();
    const auto a = gt.tensor().values();
    const auto b = pred.tensor().values();
    const double du = a[i] - b[i];
    const double dv = a[plane + i] - b[plane + i];
    return std::sqrt(du * du + dv * dv);
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

double aepe(const FlowField& gt, const FlowField& pred, const KeyPointSet* points, const Tensor* valid) {
    ErrorPool pool;
    if (pool.add(gt, pred, points, valid) == 0) throw Error("aepe: no pixels to evaluate");
    return pool.mean();
}

std::size_t ErrorPool::add(const FlowField& gt, const FlowField& pred, const KeyPointSet* points,
                           const Tensor* valid) {
    const auto pixels = evaluated_pixels(gt, pred, points, valid);
    for (std::size_t i : pixels) sum += endpoint_at(gt, pred, i);
    count += pixels.size();
    return pixels.size();
}

double ErrorPool::mean() const {
    if (count == 0) throw Error("aepe: no pixels to evaluate");
    return sum / static_cast<double>(count);
}

FeatureRows pca_project(const FeatureRows& rows, int k) {
    if (rows.size() < 2) throw Error("pca_project: need at least two rows");
    const std::size_t dims = rows.front().size();
    if (k < 1 || static_cast<std::size_t>(k) > dims) throw Error("pca_project: k must be in [1, feature dimension]");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dims));
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        if (row.size() != dims) throw ShapeError("pca_project: rows differ in length");
        for (std::size_t c = 0; c < dims; ++c) x(r, static_cast<Eigen::Index>(c)) = row[c];
    }
    const Eigen::RowVectorXd centroid = x.colwise().mean();
    x.rowwise() -= centroid;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("pca_project: eigendecomposition failed");

    // Eigen sorts ascending; take the k largest.
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(dims), k);
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXd v = eig.eigenvectors().col(static_cast<Eigen::Index>(dims) - 1 - j);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (v(i) != 0.0) {
                if (v(i) < 0.0) v = -v;
                break;
            }
        }
        basis.col(j) = v;
    }
    const Eigen::MatrixXd projected = x * basis;
    FeatureRows out(rows.size(), std::vector<double>(static_cast<std::size_t>(k)));
    for (Eigen::Index r = 0; r < n; ++r) {
        for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] = projected(r, j);
    }
    return out;
}

double centroid_distance(const FeatureRows& key_rows, const FeatureRows& random_rows, int k) {
    if (key_rows.empty() || random_rows.empty()) throw Error("L_c: both point sets must be nonempty");
    FeatureRows all = key_rows;
    all.insert(all.end(), random_rows.begin(), random_rows.end());
    const FeatureRows projected = pca_project(all, k);
    std::vector<double> ck(static_cast<std::size_t>(k), 0.0), cr(static_cast<std::size_t>(k), 0.0);
    for (std::size_t r = 0; r < projected.size(); ++r) {
        auto& dst = r < key_rows.size() ? ck : cr;
        for (int j = 0; j < k; ++j) dst[static_cast<std::size_t>(j)] += projected[r][static_cast<std::size_t>(j)];
    }
    double d2 = 0.0;
    for (int j = 0; j < k; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        const double diff = ck[jj] / static_cast<double>(key_rows.size()) - cr[jj] / static_cast<double>(random_rows.size());
        d2 += diff * diff;
    }
    return std::sqrt(d2);
}

FeatureRows sample_features(const Tensor& features, const KeyPointSet& points, int stride) {
    if (features.rank() != 3) throw ShapeError("sample_features: features must be [C,h,w]");
    if (stride < 1) throw Error("sample_features: stride must be positive");
    const int c = features.dim(0), h = features.dim(1), w = features.dim(2);
    const auto v = features.values();
    FeatureRows rows;
    for (const auto& p : points.points) {
        const double fx = std::clamp(p.x / stride, 0.0, static_cast<double>(w - 1));
        const double fy = std::clamp(p.y / stride, 0.0, static_cast<double>(h - 1));
        const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double ax = fx - x0, ay = fy - y0;
        std::vector<double> row(static_cast<std::size_t>(c));
        for (int ch = 0; ch < c; ++ch) {
            auto at = [&](int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; };
            const double top = at(y0, x0) + ax * (at(y0, x1) - at(y0, x0));
            const double bot = at(y1, x0) + ax * (at(y1, x1) - at(y1, x0));
            row[static_cast<std::size_t>(ch)] = top + ay * (bot - top);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

double lc_metric(const FlowNet& net, const Tensor& image, const ConditionMask& mask, const KeyPointSet& key_points,
                 const KeyPointSet& random_points, int k) {
    if (key_points.empty() || random_points.empty()) throw Error("lc_metric: both point sets must be nonempty");
    const EncoderOutput enc = cce_forward(net, image, mask);
    const int stride = cumulative_stride(net.spec());
    return centroid_distance(sample_features(enc.final_features(), key_points, stride),
                             sample_features(enc.final_features(), random_points, stride), k);
}

MetricsRow evaluate_model(const FlowNet& net, const std::string& tag, const Dataset& data, const EvalOptions& options) {
    if (data.empty()) throw Error("evaluate_model: empty evaluation set");
    if (options.detectors.empty()) throw Error("evaluate_model: no detectors");
    MetricsRow row;
    row.model = tag;
    row.params = net.parameter_count();
    const auto bytes = encode_checkpoint(net);
    row.config_digest = digest_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));

    ErrorPool overall;
    double lc_sum = 0.0;
    int lc_count = 0;
    for (std::size_t d = 0; d < options.detectors.size(); ++d) {
        const DetectorSpec& det = options.detectors[d];
        ErrorPool kp;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const Sample& s = data[i];
            const KeyPointSet pts = detect(det, s, i);
            const Conditions cond = make_conditions(net, s, pts);
            const FlowPrediction pred = forward(net, s.i1, s.i2, cond.query, cond.reference);
            if (d == 0) {
                overall.add(s.flow, pred.flow, nullptr, &s.valid);
                if (static_cast<int>(i) < options.lc_samples && !pts.empty()) {
                    const KeyPointSet rnd = random_points(s.size().height, s.size().width,
                                                          static_cast<int>(pts.count()),
                                                          derive_seed(options.seed, i));
                    lc_sum += lc_metric(net, s.i1, cond.query, pts, rnd, options.pca_k);
                    ++lc_count;
                }
            }
            if (!pts.empty()) kp.add(s.flow, pred.flow, &pts, &s.valid);
        }
        row.aepe_kp[det.tag] = kp.count ? kp.mean() : std::nan("");
    }
    row.aepe_all = overall.mean();
    row.l_c = lc_count ? lc_sum / lc_count : std::nan("");
    return row;
}

MetricsReport compare(const std::vector<std::filesystem::path>& checkpoints, const Dataset& data,
                      const EvalOptions& options) {
    MetricsReport report;
    for (const auto& path : checkpoints) {
        const FlowNet net = load_checkpoint(path);
        report.rows.push_back(evaluate_model(net, path.string(), data, options));
    }
    return report;
}

std::string digest_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string MetricsReport::to_csv() const {
    std::set<std::string> detectors;
    for (const auto& r : rows) {
        for (const auto& [tag, v] : r.aepe_kp) detectors.insert(tag);
    }
    std::ostringstream os;
    os << "model,aepe_all";
    for (const auto& d : detectors) os << ",aepe_kp." << d;
    os << ",l_c,params,config_digest\n";
    for (const auto& r : rows) {
        os << r.model << ',' << format_real(r.aepe_all);
        for (const auto& d : detectors) {
            auto it = r.aepe_kp.find(d);
            os << ',' << (it == r.aepe_kp.end() ? std::string() : format_real(it->second));
        }
        os << ',' << format_real(r.l_c) << ',' << r.params << ',' << r.config_digest << '\n';
    }
    return os.str();
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json row;
        row["model"] = r.model;
        row["aepe_all"] = r.aepe_all;
        for (const auto& [tag, v] : r.aepe_kp) row["aepe_kp." + tag] = v;
        row["l_c"] = r.l_c;
        row["params"] = r.params;
        row["config_digest"] = r.config_digest;
        out.push_back(std::move(row));
    }
    return out.dump(2) + "\n";
}

std::string MetricsReport::to_svg() const {
    // Grouped bars: overall AEPE and every key-point AEPE per model.
    std::vector<std::pair<std::string, std::vector<double>>> groups;
    std::vector<std::string> series{"overall"};
    for (const auto& r : rows) {
        for (const auto& [tag, v] : r.aepe_kp) {
            if (std::find(series.begin(), series.end(), "kp." + tag) == series.end()) series.push_back("kp." + tag);
        }
    }
    double vmax = 0.0;
    for (const auto& r : rows) {
        std::vector<double> vals{r.aepe_all};
        for (std::size_t s = 1; s < series.size(); ++s) {
            auto it = r.aepe_kp.find(series[s].substr(3));
            vals.push_back(it == r.aepe_kp.end() ? 0.0 : it->second);
        }
        for (double v : vals) {
            if (std::isfinite(v)) vmax = std::max(vmax, v);
        }
        groups.emplace_back(r.model, std::move(vals));
    }
    if (vmax <= 0.0) vmax = 1.0;
    const char* colors[] = {"#888888", "#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    const int bar = 18, gap = 24, chart_h = 200, top = 20, left = 40;
    const int width = left + static_cast<int>(groups.size()) * (static_cast<int>(series.size()) * bar + gap) + 20;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << chart_h + top + 60
       << "\">\n";
    os << "<text x=\"4\" y=\"14\" font-size=\"12\">AEPE (max " << format_real(vmax) << ")</text>\n";
    int x = left;
    for (const auto& [name, vals] : groups) {
        for (std::size_t s = 0; s < vals.size(); ++s) {
            const double v = std::isfinite(vals[s]) ? vals[s] : 0.0;
            const int h = static_cast<int>(std::lround(chart_h * v / vmax));
            os << "<rect x=\"" << x << "\" y=\"" << top + chart_h - h << "\" width=\"" << bar - 2 << "\" height=\"" << h
               << "\" fill=\"" << colors[s % 5] << "\"><title>" << series[s] << " " << format_real(v)
               << "</title></rect>\n";
            x += bar;
        }
        os << "<text x=\"" << x - static_cast<int>(vals.size()) * bar << "\" y=\"" << top + chart_h + 16
           << "\" font-size=\"11\">" << name << "</text>\n";
        x += gap;
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        os << "<rect x=\"" << left + static_cast<int>(s) * 110 << "\" y=\"" << top + chart_h + 30
           << "\" width=\"10\" height=\"10\" fill=\"" << colors[s % 5] << "\"/><text x=\""
           << left + static_cast<int>(s) * 110 + 14 << "\" y=\"" << top + chart_h + 39 << "\" font-size=\"11\">"
           << series[s] << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace focusflow
