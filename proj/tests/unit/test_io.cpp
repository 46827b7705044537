#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "focusflow/error.hpp"
#include "focusflow/io.hpp"
#include "focusflow/keypoints.hpp"
#include "focusflow/random.hpp"
#include "support.hpp"

using namespace focusflow;
using testing::random_tensor;

namespace {

std::vector<double> as_float(std::span<const double> v) {
    std::vector<double> out;
    for (double x : v) out.push_back(static_cast<float>(x));
    return out;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

ModelSpec tiny_spec() {
    ModelSpec s;
    s.widths = {4, 6};
    s.strides = {2, 2};
    s.corr_radius = 1;
    s.decoder_width = 5;
    return s;
}

}  // namespace

TEST_CASE(".flo layout and round trip") {
    SUBCASE("zero 2x2") {
        const auto bytes = encode_flo(FlowField::zeros({2, 2}));
        REQUIRE(bytes.size() == 44);
        float magic;
        std::int32_t w, h;
        std::memcpy(&magic, bytes.data(), 4);
        std::memcpy(&w, bytes.data() + 4, 4);
        std::memcpy(&h, bytes.data() + 8, 4);
        CHECK(magic == 202021.25f);
        CHECK(w == 2);
        CHECK(h == 2);
        for (std::size_t i = 12; i < 44; ++i) CHECK(bytes[i] == 0);
    }
    SUBCASE("interleaved order") {
        // u = 1, 2 / v = 10, 20 on a 1x2 field -> 1 10 2 20
        const auto bytes = encode_flo(FlowField(Tensor::from({2, 1, 2}, {1, 2, 10, 20})));
        float payload[4];
        std::memcpy(payload, bytes.data() + 12, 16);
        CHECK(payload[0] == 1.0f);
        CHECK(payload[1] == 10.0f);
        CHECK(payload[2] == 2.0f);
        CHECK(payload[3] == 20.0f);
    }
    SUBCASE("round trip is bitwise at 32 bits") {
        const auto dir = testing::scratch_dir("flo");
        for (int seed = 0; seed < 10; ++seed) {
            const FlowField f(random_tensor({2, 3 + seed, 5 + 2 * seed}, seed, -40, 40));
            write_flo(f, dir / "f.flo");
            const FlowField g = read_flo(dir / "f.flo");
            CHECK(testing::bitwise_equal(g.tensor().values(), as_float(f.tensor().values())));
            CHECK(encode_flo(g) == read_file(dir / "f.flo"));
        }
    }
    SUBCASE("bad magic names the offset") {
        auto bytes = encode_flo(FlowField::zeros({2, 2}));
        bytes[0] ^= 0xff;
        CHECK_THROWS_WITH_AS(decode_flo(bytes), doctest::Contains("offset 0"), FormatError);
    }
    SUBCASE("truncations and trailing bytes are rejected") {
        const auto bytes = encode_flo(FlowField(random_tensor({2, 3, 4}, 1)));
        for (std::size_t n = 0; n < bytes.size(); ++n) {
            // Copy into an exactly sized buffer so a sanitizer would see an over-read.
            const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
            CHECK_THROWS_AS(decode_flo(cut), FormatError);
        }
        auto longer = bytes;
        longer.push_back(0);
        CHECK_THROWS_AS(decode_flo(longer), FormatError);
    }
}

TEST_CASE("PGM and PPM") {
    const auto dir = testing::scratch_dir("pnm");
    SUBCASE("black 4x4") {
        const auto bytes = encode_pnm(Tensor::zeros({1, 4, 4}));
        const std::string header = "P5\n4 4\n255\n";
        REQUIRE(bytes.size() == header.size() + 16);
        CHECK(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header.size())) == header);
        for (std::size_t i = header.size(); i < bytes.size(); ++i) CHECK(bytes[i] == 0);
    }
    SUBCASE("quantization bound") {
        for (int seed = 0; seed < 5; ++seed) {
            const Tensor g = random_tensor({1, 7, 9}, seed, 0, 1);
            write_pgm(g, dir / "g.pgm");
            CHECK(testing::max_abs_diff(read_pgm(dir / "g.pgm").values(), g.values()) <= 0.5 / 255 + 1e-15);
            const Tensor c = random_tensor({3, 5, 6}, 10 + seed, 0, 1);
            write_ppm(c, dir / "c.ppm");
            const Tensor back = read_ppm(dir / "c.ppm");
            CHECK(back.shape() == c.shape());
            CHECK(testing::max_abs_diff(back.values(), c.values()) <= 1.0 / 255);
        }
    }
    SUBCASE("comments and whitespace") {
        const std::string raster = std::string("\x00\x80\xff\x10\x20\x30", 6);
        const Tensor plain = decode_pnm(bytes_of("P5\n3 2\n255\n" + raster));
        const Tensor commented = decode_pnm(bytes_of("P5 # a comment\n# another\n 3\t2  # size\n255\n" + raster));
        CHECK(testing::bitwise_equal(plain.values(), commented.values()));
        CHECK(plain.at(0, 0, 2) == 1.0);
        CHECK(plain.at(0, 0, 1) == doctest::Approx(128.0 / 255));
    }
    SUBCASE("malformed headers") {
        CHECK_THROWS_AS(decode_pnm(bytes_of("P2\n1 1\n255\n0")), FormatError);
        CHECK_THROWS_AS(decode_pnm(bytes_of("P5\n1 1\n65535\n\x00\x00")), FormatError);
        CHECK_THROWS_AS(decode_pnm(bytes_of("P5\n2 2\n255\n\x00")), FormatError);
        CHECK_THROWS_AS(decode_pnm(bytes_of("P5\n-1 2\n255\n")), FormatError);
        const auto good = encode_pnm(random_tensor({1, 3, 3}, 2, 0, 1));
        for (std::size_t n = 0; n < good.size(); ++n) {
            const std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));
            CHECK_THROWS_AS(decode_pnm(cut), FormatError);
        }
    }
}

TEST_CASE("checkpoints") {
    const auto dir = testing::scratch_dir("ckpt");
    SUBCASE("round trip") {
        for (FusionKind k : {FusionKind::bidirectional, FusionKind::concat, FusionKind::none}) {
            ModelSpec spec = tiny_spec();
            spec.fusion = k;
            spec.condition.pattern = MaskPattern::neighbor_g;
            spec.condition.sigma = 2.25;
            FlowNet net = build_model(spec, 4);
            // Make fusion weights nonzero too.
            for (auto& p : net.parameters()) {
                Tensor t = p.tensor;
                Rng rng(7);
                for (auto& v : t.mutable_values()) v = static_cast<float>(v + rng.uniform(-0.1, 0.1));
            }
            save_checkpoint(net, dir / "m.bin");
            const FlowNet back = load_checkpoint(dir / "m.bin");
            CHECK(back.spec().structural_difference(spec).empty());
            CHECK(back.spec().condition == spec.condition);
            const auto a = net.parameters(), b = back.parameters();
            REQUIRE(a.size() == b.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(a[i].name == b[i].name);
                CHECK(testing::bitwise_equal(a[i].tensor.values(), b[i].tensor.values()));
            }
            CHECK(encode_checkpoint(back) == read_file(dir / "m.bin"));
        }
    }
    SUBCASE("mismatched spec names the stage") {
        save_checkpoint(build_model(tiny_spec(), 1), dir / "m.bin");
        ModelSpec other = tiny_spec();
        other.widths = {4, 8};
        CHECK_THROWS_WITH_AS(load_checkpoint(dir / "m.bin", other), doctest::Contains("stage 1"), FormatError);
        CHECK_NOTHROW(load_checkpoint(dir / "m.bin", tiny_spec()));
    }
    SUBCASE("zero model has a zero payload") {
        FlowNet net = build_model(tiny_spec(), 2);
        zero_parameters(net);
        const auto bytes = encode_checkpoint(net);
        const std::size_t payload = 4 * net.parameter_count();
        REQUIRE(bytes.size() > payload);
        for (std::size_t i = bytes.size() - payload; i < bytes.size(); ++i) CHECK(bytes[i] == 0);
    }
    SUBCASE("version and truncation") {
        auto bytes = encode_checkpoint(build_model(tiny_spec(), 3));
        auto bad = bytes;
        bad[8] = 9;
        CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
        bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
        for (std::size_t n = 0; n < bytes.size(); n += 1 + n / 7) {
            const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
            CHECK_THROWS_AS(decode_checkpoint(cut), FormatError);
        }
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint(dir / "nope.bin"), IoError); }
}

TEST_CASE("atomic writes leave no temporaries") {
    const auto dir = testing::scratch_dir("atomic");
    write_text_atomic(dir / "a.txt", "one");
    write_text_atomic(dir / "a.txt", "two");
    const auto b = read_file(dir / "a.txt");
    CHECK(std::string(b.begin(), b.end()) == "two");
    int files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
    CHECK(files == 1);
}

TEST_CASE("key-point CSV round trip is exact at six decimals") {
    const auto dir = testing::scratch_dir("kpio");
    Rng rng(5);
    KeyPointSet pts;
    pts.size = {48, 48};
    for (int i = 0; i < 50; ++i) {
        // values representable with six decimals
        pts.points.push_back({rng.uniform_int(0, 47999999) / 1e6, rng.uniform_int(0, 47999999) / 1e6,
                              rng.uniform_int(0, 1000000) / 1e3});
    }
    write_keypoints(pts, dir / "k.csv");
    const KeyPointSet back = load_keypoints(dir / "k.csv", {48, 48});
    CHECK(back.points == pts.points);
}
