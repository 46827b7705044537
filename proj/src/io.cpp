#include "focusflow/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "focusflow/error.hpp"

namespace focusflow {

static_assert(std::endian::native == std::endian::little, "byte codecs assume a little-endian host");

namespace {

class ByteWriter {
public:
    template <class T>
    void put(T value) {
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
    }
    void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    template <class T>
    T get(const char* field) {
        need(sizeof(T), field);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string_view get_bytes(std::size_t n, const char* field) {
        need(n, field);
        std::string_view s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    void need(std::size_t n, const char* field) const {
        if (remaining() < n) {
            throw FormatError(what_ + ": truncated at offset " + std::to_string(pos_) + " while reading " + field +
                              " (need " + std::to_string(n) + " bytes, have " + std::to_string(remaining()) + ")");
        }
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

constexpr char kCheckpointTag[8] = {'F', 'F', 'L', 'O', 'W', 'C', 'K', 'P'};

// PNM header tokenizer: whitespace-separated tokens, '#' comments to end of line.
class PnmHeader {
public:
    explicit PnmHeader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::string token() {
        skip_space_and_comments();
        std::string out;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
            out.push_back(static_cast<char>(bytes_[pos_++]));
        }
        if (out.empty()) throw FormatError("PNM header truncated at offset " + std::to_string(pos_));
        return out;
    }
    int number(const char* field) {
        const std::string t = token();
        int v = 0;
        for (char c : t) {
            if (c < '0' || c > '9' || v > 100000000) {
                throw FormatError(std::string("PNM header: malformed ") + field + " '" + t + "'");
            }
            v = v * 10 + (c - '0');
        }
        return v;
    }
    // Exactly one whitespace byte separates the header from the raster.
    std::size_t raster_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw FormatError("PNM header: missing separator before raster at offset " + std::to_string(pos_));
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

// ---- files -----------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---- .flo --------------------------------------------------------------------

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
    const int h = flow.height(), w = flow.width();
    const auto v = flow.tensor().values();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    ByteWriter out;
    out.put(kFloMagic);
    out.put(static_cast<std::int32_t>(w));
    out.put(static_cast<std::int32_t>(h));
    for (std::size_t i = 0; i < plane; ++i) {
        if (!std::isfinite(v[i]) || !std::isfinite(v[plane + i])) throw FormatError(".flo: cannot encode non-finite flow");
        out.put(static_cast<float>(v[i]));
        out.put(static_cast<float>(v[plane + i]));
    }
    return out.take();
}

FlowField decode_flo(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes, ".flo");
    const float magic = in.get<float>("magic");
    if (magic != kFloMagic) throw FormatError(".flo: bad magic at offset 0");
    const std::int32_t w = in.get<std::int32_t>("width");
    const std::int32_t h = in.get<std::int32_t>("height");
    if (w < 1 || h < 1) throw FormatError(".flo: nonpositive dimensions at offset 4");
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    if (plane > in.remaining() / 8) {
        throw FormatError(".flo: payload truncated at offset 12 (need " + std::to_string(plane * 8) + " bytes, have " +
                          std::to_string(in.remaining()) + ")");
    }
    std::vector<double> values(2 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        values[i] = in.get<float>("u");
        values[plane + i] = in.get<float>("v");
    }
    if (in.remaining() != 0) throw FormatError(".flo: trailing bytes at offset " + std::to_string(in.offset()));
    return FlowField(Tensor::from({2, h, w}, std::move(values)));
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) { write_file_atomic(path, encode_flo(flow)); }

FlowField read_flo(const std::filesystem::path& path) { return decode_flo(read_file(path)); }

// ---- PNM ---------------------------------------------------------------------

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
    Tensor img = image.rank() == 2 ? image.reshaped({1, image.dim(0), image.dim(1)}) : image;
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) {
        throw ShapeError("PNM images must be [1,H,W] or [3,H,W], got " + shape_to_string(image.shape()));
    }
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const std::string header = (c == 1 ? "P5\n" : "P6\n") + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const auto v = img.values();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            const double x = v[static_cast<std::size_t>(ch) * plane + i];
            if (!(x >= 0.0 && x <= 1.0)) throw FormatError("PNM: intensity outside [0,1]");
            out.push_back(static_cast<std::uint8_t>(std::lround(x * 255.0)));
        }
    }
    return out;
}

Tensor decode_pnm(std::span<const std::uint8_t> bytes) {
    PnmHeader header(bytes);
    const std::string magic = header.token();
    int channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw FormatError("PNM: unsupported magic '" + magic + "'");
    }
    const int w = header.number("width");
    const int h = header.number("height");
    const int maxval = header.number("maxval");
    if (w < 1 || h < 1) throw FormatError("PNM: nonpositive dimensions");
    if (maxval != 255) throw FormatError("PNM: only maxval 255 is supported, got " + std::to_string(maxval));
    const std::size_t offset = header.raster_offset();
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    const std::size_t need = plane * static_cast<std::size_t>(channels);
    if (bytes.size() < offset || bytes.size() - offset < need) {
        throw FormatError("PNM: raster truncated at offset " + std::to_string(offset));
    }
    std::vector<double> values(need);
    for (std::size_t i = 0; i < plane; ++i) {
        for (int ch = 0; ch < channels; ++ch) {
            values[static_cast<std::size_t>(ch) * plane + i] =
                bytes[offset + i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(ch)] / 255.0;
        }
    }
    return Tensor::from({channels, h, w}, std::move(values));
}

void write_pgm(const Tensor& image, const std::filesystem::path& path) {
    if (!(image.rank() == 2 || (image.rank() == 3 && image.dim(0) == 1))) throw ShapeError("write_pgm needs one channel");
    write_file_atomic(path, encode_pnm(image));
}

Tensor read_pgm(const std::filesystem::path& path) {
    Tensor t = decode_pnm(read_file(path));
    if (t.dim(0) != 1) throw FormatError(path.string() + " is not a P5 image");
    return t;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
    if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("write_ppm needs three channels");
    write_file_atomic(path, encode_pnm(image));
}

Tensor read_ppm(const std::filesystem::path& path) {
    Tensor t = decode_pnm(read_file(path));
    if (t.dim(0) != 3) throw FormatError(path.string() + " is not a P6 image");
    return t;
}

// ---- checkpoints -------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const FlowNet& net) {
    const ModelSpec& spec = net.spec();
    ByteWriter out;
    out.put_bytes(std::string_view(kCheckpointTag, sizeof(kCheckpointTag)));
    out.put(kCheckpointVersion);
    out.put(static_cast<std::uint32_t>(spec.widths.size()));
    for (int v : spec.widths) out.put(static_cast<std::int32_t>(v));
    for (int v : spec.strides) out.put(static_cast<std::int32_t>(v));
    out.put(static_cast<std::uint32_t>(spec.fusion));
    out.put(static_cast<std::int32_t>(spec.corr_radius));
    out.put(static_cast<std::int32_t>(spec.refine_convs));
    out.put(static_cast<std::uint32_t>(spec.use_cfe ? 1 : 0));
    out.put(static_cast<std::int32_t>(spec.image_channels));
    out.put(static_cast<std::int32_t>(spec.decoder_width));
    out.put(static_cast<std::uint32_t>(spec.condition.pattern));
    out.put(static_cast<std::int32_t>(spec.condition.diameter));
    out.put(spec.condition.sigma);
    const auto params = net.parameters();
    out.put(static_cast<std::uint64_t>(net.parameter_count()));
    for (const auto& p : params) {
        for (double v : p.tensor.values()) out.put(static_cast<float>(v));
    }
    return out.take();
}

FlowNet decode_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes, "checkpoint");
    if (in.get_bytes(sizeof(kCheckpointTag), "format tag") != std::string_view(kCheckpointTag, sizeof(kCheckpointTag))) {
        throw FormatError("checkpoint: bad format tag at offset 0");
    }
    const auto version = in.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    ModelSpec spec;
    const auto stages = in.get<std::uint32_t>("stage count");
    if (stages == 0 || stages > 64) throw FormatError("checkpoint: implausible stage count " + std::to_string(stages));
    spec.widths.assign(stages, 0);
    spec.strides.assign(stages, 0);
    for (auto& v : spec.widths) v = in.get<std::int32_t>("width");
    for (auto& v : spec.strides) v = in.get<std::int32_t>("stride");
    const auto fusion = in.get<std::uint32_t>("fusion kind");
    if (fusion > static_cast<std::uint32_t>(FusionKind::none)) throw FormatError("checkpoint: unknown fusion kind");
    spec.fusion = static_cast<FusionKind>(fusion);
    spec.corr_radius = in.get<std::int32_t>("correlation radius");
    spec.refine_convs = in.get<std::int32_t>("refinement conv count");
    spec.use_cfe = in.get<std::uint32_t>("use_cfe") != 0;
    spec.image_channels = in.get<std::int32_t>("image channels");
    spec.decoder_width = in.get<std::int32_t>("decoder width");
    const auto pattern = in.get<std::uint32_t>("condition pattern");
    if (pattern > static_cast<std::uint32_t>(MaskPattern::reference)) throw FormatError("checkpoint: unknown mask pattern");
    spec.condition.pattern = static_cast<MaskPattern>(pattern);
    spec.condition.diameter = in.get<std::int32_t>("condition diameter");
    spec.condition.sigma = in.get<double>("condition sigma");
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: invalid model layout: ") + e.what());
    }
    // Guard allocation against absurd layouts before building.
    for (int wdt : spec.widths) {
        if (wdt > 65536) throw FormatError("checkpoint: implausible stage width");
    }
    if (spec.decoder_width > 65536 || spec.corr_radius > 64 || spec.refine_convs > 64 || spec.image_channels > 64) {
        throw FormatError("checkpoint: implausible decoder layout");
    }
    const auto count = in.get<std::uint64_t>("parameter count");
    if (count > in.remaining() / 4) {
        throw FormatError("checkpoint: parameter payload truncated at offset " + std::to_string(in.offset()));
    }
    FlowNet net = build_model(spec, 0);
    if (count != net.parameter_count()) {
        throw FormatError("checkpoint: parameter count " + std::to_string(count) + " does not match layout (" +
                          std::to_string(net.parameter_count()) + ")");
    }
    for (auto& p : net.parameters()) {
        Tensor t = p.tensor;
        for (auto& v : t.mutable_values()) v = in.get<float>("parameter");
    }
    if (in.remaining() != 0) throw FormatError("checkpoint: trailing bytes at offset " + std::to_string(in.offset()));
    return net;
}

void save_checkpoint(const FlowNet& net, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(net));
}

FlowNet load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

FlowNet load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected) {
    FlowNet net = load_checkpoint(path);
    const std::string diff = expected.structural_difference(net.spec());
    if (!diff.empty()) throw FormatError("checkpoint " + path.string() + " does not match the requested model: " + diff);
    return net;
}

}  // namespace focusflow
