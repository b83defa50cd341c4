#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "cpat/data.hpp"
#include "cpat/fft.hpp"
#include "test_util.hpp"

using namespace cpat;
using test::random_tensor;

namespace {

// 2x2 truecolor fixture (red, green / blue, white) written by an
// independent encoder
const std::vector<uint8_t> kRgbFixture = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48,
    0x44, 0x52, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x08, 0x02, 0x00, 0x00,
    0x00, 0xfd, 0xd4, 0x9a, 0x73, 0x00, 0x00, 0x00, 0x12, 0x49, 0x44, 0x41, 0x54, 0x78,
    0x9c, 0x63, 0xf8, 0xcf, 0xc0, 0xc0, 0x00, 0xc2, 0x0c, 0xff, 0x81, 0x00, 0x00, 0x1f,
    0xee, 0x05, 0xfb, 0x0b, 0xd9, 0x68, 0x8b, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e,
    0x44, 0xae, 0x42, 0x60, 0x82};

// same pixels as RGBA with an Up-filtered second row
const std::vector<uint8_t> kRgbaFixture = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48,
    0x44, 0x52, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x08, 0x06, 0x00, 0x00,
    0x00, 0x72, 0xb6, 0x0d, 0x24, 0x00, 0x00, 0x00, 0x19, 0x49, 0x44, 0x41, 0x54, 0x78,
    0x9c, 0x63, 0xf8, 0xcf, 0xc0, 0xd0, 0xc0, 0xf0, 0x9f, 0xa1, 0x81, 0x89, 0x91, 0xe1,
    0xbf, 0xc7, 0x7f, 0x20, 0x06, 0x00, 0x36, 0xb3, 0x06, 0x8f, 0x86, 0xeb, 0x9f, 0xe0,
    0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

// 16-bit depth: must be rejected
const std::vector<uint8_t> kDeepFixture = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48,
    0x44, 0x52, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x10, 0x02, 0x00, 0x00,
    0x00, 0xc0, 0xe7, 0x8f, 0x9d, 0x00, 0x00, 0x00, 0x0f, 0x49, 0x44, 0x41, 0x54, 0x78,
    0x9c, 0x63, 0x60, 0x60, 0x64, 0x60, 0x62, 0x60, 0x06, 0x00, 0x00, 0x15, 0x00, 0x07,
    0x3c, 0x77, 0xf4, 0x28, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42,
    0x60, 0x82};

} // namespace

TEST_CASE("png fixture decodes to exact pixels") {
    ImageRGB img = decode_png(kRgbFixture);
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    const uint8_t want[12] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255};
    for (int i = 0; i < 12; ++i) CHECK(img.pixels[i] == want[i]);
}

TEST_CASE("rgba input drops alpha; unfiltering works") {
    ImageRGB img = decode_png(kRgbaFixture);
    CHECK(img.width == 2);
    const uint8_t want[12] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255};
    for (int i = 0; i < 12; ++i) CHECK(img.pixels[i] == want[i]);
}

TEST_CASE("sub, average and paeth row filters decode correctly") {
    // 3x3 fixture from an independent encoder, one filter per row
    const std::vector<uint8_t> bytes = {
        0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48,
        0x44, 0x52, 0x00, 0x00, 0x00, 0x03, 0x00, 0x00, 0x00, 0x03, 0x08, 0x02, 0x00, 0x00,
        0x00, 0xd9, 0x4a, 0x22, 0xe8, 0x00, 0x00, 0x00, 0x1b, 0x49, 0x44, 0x41, 0x54, 0x78,
        0x9c, 0x63, 0x64, 0xe7, 0xe2, 0xe5, 0x02, 0x03, 0x66, 0x25, 0x65, 0x55, 0x11, 0x30,
        0x60, 0x91, 0x93, 0x93, 0x83, 0x88, 0x01, 0x00, 0x1a, 0xcb, 0x01, 0xdb, 0x2a, 0x93,
        0x0e, 0x14, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};
    ImageRGB img = decode_png(bytes);
    REQUIRE(img.width == 3);
    REQUIRE(img.height == 3);
    const uint8_t want[27] = {7,  10, 13, 17, 20, 23, 27, 30, 33, 37, 40, 43, 47, 50,
                              53, 57, 60, 63, 67, 70, 73, 77, 80, 83, 87, 90, 93};
    for (int i = 0; i < 27; ++i) CHECK(img.pixels[i] == want[i]);
}

TEST_CASE("unsupported and malformed files raise explicit errors") {
    CHECK_THROWS_WITH_AS(decode_png(kDeepFixture), doctest::Contains("bit depth"), DataError);

    std::vector<uint8_t> truncated(kRgbFixture.begin(), kRgbFixture.begin() + 40);
    CHECK_THROWS_AS(decode_png(truncated), DataError);

    std::vector<uint8_t> junk = {1, 2, 3};
    CHECK_THROWS_WITH_AS(decode_png(junk), doctest::Contains("offset 0"), DataError);

    std::vector<uint8_t> corrupt = kRgbFixture;
    corrupt[45] ^= 0xff; // clobber the deflate stream
    CHECK_THROWS_AS(decode_png(corrupt), DataError);
}

TEST_CASE("save/load roundtrip is bitwise") {
    Rng rng(1);
    ImageRGB img;
    img.width = 13;
    img.height = 7;
    img.pixels.resize(13 * 7 * 3);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
    const std::string path = "/tmp/cpat_test_roundtrip.png";
    save_png(img, path);
    ImageRGB back = load_png(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.pixels == img.pixels);
    std::remove(path.c_str());
}

TEST_CASE("tensor conversion contract") {
    ImageRGB img = decode_png(kRgbFixture);
    TensorD t = data::image_to_tensor<double>(img);
    CHECK(t.shape() == std::vector<int64_t>{3, 2, 2});
    CHECK(t.at(int64_t(0), int64_t(0), int64_t(0)) == 1.0); // red channel of red pixel
    CHECK(t.at(int64_t(2), int64_t(1), int64_t(0)) == 1.0); // blue channel of blue pixel
    ImageRGB back = data::tensor_to_image(t);
    CHECK(back.pixels == img.pixels);

    // out-of-range values clamp instead of wrapping
    TensorD wild({3, 1, 1}, {1.7, -0.3, 0.5});
    ImageRGB c = data::tensor_to_image(wild);
    CHECK(c.pixels[0] == 255);
    CHECK(c.pixels[1] == 0);
    CHECK(c.pixels[2] == 128);
}

TEST_CASE("bicubic: identity, constants, linear reproduction") {
    Rng rng(2);
    TensorD x = random_tensor<double>({3, 9, 11}, rng, 0, 1);
    TensorD same = data::bicubic_resize(x, 9, 11);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(std::abs(same[i] - x[i]) < 1e-6);

    TensorD c = TensorD::full({1, 8, 8}, 0.37);
    TensorD up = data::bicubic_resize(c, 13, 19);
    for (int64_t i = 0; i < up.numel(); ++i) CHECK(up[i] == doctest::Approx(0.37).epsilon(1e-12));
    TensorD down = data::bicubic_resize(c, 3, 5);
    for (int64_t i = 0; i < down.numel(); ++i)
        CHECK(down[i] == doctest::Approx(0.37).epsilon(1e-12));

    // downscaling a horizontal ramp keeps it linear away from the clamped edges
    const int64_t w_in = 64, w_out = 16;
    TensorD ramp({1, 4, w_in});
    for (int64_t y = 0; y < 4; ++y)
        for (int64_t xx = 0; xx < w_in; ++xx) ramp.at(int64_t(0), y, xx) = static_cast<double>(xx);
    TensorD small = data::bicubic_resize(ramp, 4, w_out);
    const double ratio = static_cast<double>(w_in) / w_out;
    for (int64_t o = 2; o < w_out - 2; ++o) {
        const double center = (o + 0.5) * ratio - 0.5;
        CHECK(std::abs(small.at(int64_t(0), int64_t(1), o) - center) < 1e-4);
    }
}

TEST_CASE("pair stream: shapes, determinism, degradation consistency") {
    auto imgs = data::synth_dataset(4, 96, 11);
    data::PairStream<double> s1(imgs, 4, 16, 7);
    data::PairStream<double> s2(imgs, 4, 16, 7);
    for (int i = 0; i < 5; ++i) {
        auto a = s1.next();
        auto b = s2.next();
        CHECK(a.lr.shape() == std::vector<int64_t>{3, 16, 16});
        CHECK(a.hr.shape() == std::vector<int64_t>{3, 64, 64});
        for (int64_t j = 0; j < a.lr.numel(); ++j) CHECK(a.lr[j] == b.lr[j]);
        for (int64_t j = 0; j < a.hr.numel(); ++j) CHECK(a.hr[j] == b.hr[j]);
        // the LR patch is exactly the bicubic downscale of its HR partner
        TensorD re = data::bicubic_resize(a.hr, 16, 16);
        for (int64_t j = 0; j < re.numel(); ++j) CHECK(a.lr[j] == re[j]);
    }
    CHECK(s1.stream_hash() == s2.stream_hash());

    data::PairStream<double> s3(imgs, 4, 16, 8);
    s3.next();
    CHECK(s3.stream_hash() != s1.stream_hash());
}

TEST_CASE("pair stream skips images smaller than a patch") {
    auto imgs = data::synth_dataset(2, 96, 3);
    ImageRGB tiny;
    tiny.width = tiny.height = 8;
    tiny.pixels.assign(8 * 8 * 3, 100);
    imgs.push_back(tiny);
    data::PairStream<double> s(imgs, 4, 16, 1); // needs 64x64, the 8x8 is dropped
    for (int i = 0; i < 8; ++i) CHECK(s.next().hr.dim(1) == 64);

    std::vector<ImageRGB> only_tiny{tiny};
    CHECK_THROWS_AS((data::PairStream<double>(only_tiny, 4, 16, 1)), DataError);
}

TEST_CASE("synthetic dataset: shape, determinism, texture mix") {
    auto a = data::synth_dataset(8, 96, 5);
    CHECK(a.size() == 8);
    for (const auto& img : a) {
        CHECK(img.width == 96);
        CHECK(img.height == 96);
        CHECK(img.valid());
    }
    auto b = data::synth_dataset(8, 96, 5);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].pixels == b[i].pixels);
    auto c = data::synth_dataset(8, 96, 6);
    bool differs = false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].pixels != c[i].pixels) differs = true;
    CHECK(differs);
}

TEST_CASE("grating images concentrate their energy in two conjugate bins") {
    auto imgs = data::synth_dataset(9, 64, 12); // indices 0,3,6 are gratings
    for (size_t idx : {size_t(0), size_t(3), size_t(6)}) {
        TensorD t = data::image_to_tensor<double>(imgs[idx]);
        TensorD ch = TensorD({1, 1, 64, 64});
        for (int64_t i = 0; i < 64 * 64; ++i) ch[i] = t[i];
        auto f = fft::fft2(ch);
        // spectrum magnitudes, DC removed (images have a 0.5 offset)
        std::vector<double> energy(64 * 64);
        double total = 0;
        for (int64_t i = 1; i < 64 * 64; ++i) {
            energy[i] = f.real[i] * f.real[i] + f.imag[i] * f.imag[i];
            total += energy[i];
        }
        std::sort(energy.begin(), energy.end(), std::greater<>());
        CHECK((energy[0] + energy[1]) / total >= 0.80);
    }
}

TEST_CASE("manifest loading") {
    auto imgs = data::synth_dataset(2, 32, 9);
    save_png(imgs[0], "/tmp/cpat_m0.png");
    save_png(imgs[1], "/tmp/cpat_m1.png");
    {
        std::ofstream m("/tmp/cpat_manifest.txt");
        m << "# two synthetic images\n/tmp/cpat_m0.png\n\n  /tmp/cpat_m1.png  \n";
    }
    auto loaded = data::load_manifest("/tmp/cpat_manifest.txt");
    CHECK(loaded.size() == 2);
    CHECK(loaded[0].pixels == imgs[0].pixels);
    CHECK(loaded[1].pixels == imgs[1].pixels);
    CHECK_THROWS_AS(data::load_manifest("/tmp/cpat_missing_manifest.txt"), DataError);
    std::remove("/tmp/cpat_m0.png");
    std::remove("/tmp/cpat_m1.png");
    std::remove("/tmp/cpat_manifest.txt");
}
