#include "focusflow/keypoints.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "focusflow/error.hpp"
#include "focusflow/random.hpp"

namespace focusflow {

namespace {

int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

double parse_real(std::string_view field, std::size_t row) {
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw FormatError("key-point CSV row " + std::to_string(row) + ": malformed number '" + std::string(field) + "'");
    }
    return v;
}

}  // namespace

ImageSize image_size_of(const Tensor& image) {
    if (!image.defined()) throw ShapeError("image is undefined");
    if (image.rank() == 2) return {image.dim(0), image.dim(1)};
    if (image.rank() == 3 && image.dim(0) == 1) return {image.dim(1), image.dim(2)};
    throw ShapeError("expected a grayscale image [H,W] or [1,H,W], got " + shape_to_string(image.shape()));
}

std::vector<double> min_eigen_response(const Tensor& image) {
    const ImageSize size = image_size_of(image);
    const int h = size.height, w = size.width;
    auto px = image.values();
    auto at = [&](int y, int x) {
        return px[static_cast<std::size_t>(reflect101(y, h)) * w + reflect101(x, w)];
    };
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<double> ixx(n), iyy(n), ixy(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
            const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    std::vector<double> response(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double a = 0, b = 0, c = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const std::size_t j = static_cast<std::size_t>(reflect101(y + dy, h)) * w + reflect101(x + dx, w);
                    a += ixx[j];
                    b += ixy[j];
                    c += iyy[j];
                }
            }
            const double half_diff = 0.5 * (a - c);
            response[static_cast<std::size_t>(y) * w + x] = 0.5 * (a + c) - std::sqrt(half_diff * half_diff + b * b);
        }
    }
    return response;
}

KeyPointSet detect_good_features(const Tensor& image, const DetectorParams& params) {
    if (params.max_corners < 1) throw Error("detect_good_features: max_corners must be at least 1");
    if (!(params.quality_level > 0.0 && params.quality_level <= 1.0)) {
        throw Error("detect_good_features: quality_level must be in (0,1]");
    }
    if (!(params.min_distance >= 0.0)) throw Error("detect_good_features: min_distance must be nonnegative");
    const ImageSize size = image_size_of(image);
    for (double v : image.values()) {
        if (!std::isfinite(v)) throw Error("detect_good_features: image has non-finite values");
    }
    KeyPointSet result;
    result.size = size;
    result.detector = "gf";

    const int h = size.height, w = size.width;
    const std::vector<double> response = min_eigen_response(image);
    const double max_response = *std::max_element(response.begin(), response.end());
    if (!(max_response > 0.0)) return result;
    const double threshold = params.quality_level * max_response;

    std::vector<std::size_t> candidates;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double r = response[i];
            if (r < threshold) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if ((dy == 0 && dx == 0) || yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (response[static_cast<std::size_t>(yy) * w + xx] > r) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) candidates.push_back(i);
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return response[a] > response[b]; });

    const double min_d2 = params.min_distance * params.min_distance;
    for (std::size_t i : candidates) {
        if (static_cast<int>(result.points.size()) >= params.max_corners) break;
        const double x = static_cast<double>(i % static_cast<std::size_t>(w));
        const double y = static_cast<double>(i / static_cast<std::size_t>(w));
        bool far_enough = true;
        for (const auto& p : result.points) {
            const double dx = p.x - x, dy = p.y - y;
            if (dx * dx + dy * dy < min_d2) {
                far_enough = false;
                break;
            }
        }
        if (far_enough) result.points.push_back({x, y, response[i]});
    }
    return result;
}

KeyPointSet random_points(int height, int width, int n, std::uint64_t seed) {
    if (height < 1 || width < 1) throw Error("random_points: image size must be positive");
    const long long total = static_cast<long long>(height) * width;
    if (n < 0 || n > total) {
        throw Error("random_points: cannot draw " + std::to_string(n) + " distinct points from " +
                    std::to_string(total) + " pixels");
    }
    // Partial Fisher-Yates over pixel indices.
    std::vector<int> idx(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    KeyPointSet result;
    result.size = {height, width};
    result.detector = "random";
    for (int k = 0; k < n; ++k) {
        const int j = rng.uniform_int(k, static_cast<int>(total) - 1);
        std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
        const int pix = idx[static_cast<std::size_t>(k)];
        result.points.push_back({static_cast<double>(pix % width), static_cast<double>(pix / width), 0.0});
    }
    return result;
}

KeyPointSet load_keypoints(const std::filesystem::path& path, ImageSize size) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open key-point file " + path.string());
    KeyPointSet result;
    result.size = size;
    result.detector = "file";
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        std::string_view sv(line);
        if (!sv.empty() && sv.back() == '\r') sv.remove_suffix(1);
        if (sv.find_first_not_of(" \t") == std::string_view::npos) continue;
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = sv.find(',', start);
            fields.push_back(sv.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 3) {
            throw FormatError("key-point CSV row " + std::to_string(row) + ": expected 3 fields, got " +
                              std::to_string(fields.size()));
        }
        KeyPoint p{parse_real(fields[0], row), parse_real(fields[1], row), parse_real(fields[2], row)};
        if (p.x < 0.0 || p.x >= size.width || p.y < 0.0 || p.y >= size.height) {
            throw FormatError("key-point CSV row " + std::to_string(row) + ": point (" + std::string(fields[0]) + "," +
                              std::string(fields[1]) + ") outside " + std::to_string(size.width) + "x" +
                              std::to_string(size.height) + " image");
        }
        result.points.push_back(p);
    }
    return result;
}

void write_keypoints(const KeyPointSet& points, const std::filesystem::path& path) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    for (const auto& p : points.points) os << p.x << ',' << p.y << ',' << p.score << '\n';
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write key-point file " + path.string());
    out << os.str();
    if (!out) throw IoError("write failed for " + path.string());
}

PixelIndex nearest_pixel(const KeyPoint& p, ImageSize size) {
    int col = static_cast<int>(std::floor(p.x + 0.5));
    int row = static_cast<int>(std::floor(p.y + 0.5));
    col = std::clamp(col, 0, size.width - 1);
    row = std::clamp(row, 0, size.height - 1);
    return {row, col};
}

std::vector<PixelIndex> unique_pixels(const KeyPointSet& points) {
    std::vector<PixelIndex> out;
    std::set<std::pair<int, int>> seen;
    for (const auto& p : points.points) {
        const PixelIndex px = nearest_pixel(p, points.size);
        if (seen.insert({px.row, px.col}).second) out.push_back(px);
    }
    return out;
}

}  // namespace focusflow
