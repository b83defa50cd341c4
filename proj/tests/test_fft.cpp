#include <doctest.h>

#include <complex>

#include "cpat/fft.hpp"
#include "test_util.hpp"

using namespace cpat;
using test::random_tensor;

namespace {

// O(N^2) direct DFT reference
ComplexTensor<double> dft2_oracle(const TensorD& x) {
    const int64_t h = x.dim(2), w = x.dim(3);
    TensorD re(x.shape()), im(x.shape());
    for (int64_t b = 0; b < x.dim(0); ++b)
        for (int64_t c = 0; c < x.dim(1); ++c)
            for (int64_t ky = 0; ky < h; ++ky)
                for (int64_t kx = 0; kx < w; ++kx) {
                    std::complex<double> acc(0, 0);
                    for (int64_t y = 0; y < h; ++y)
                        for (int64_t xx = 0; xx < w; ++xx) {
                            const double ang =
                                -2.0 * M_PI *
                                (double(ky * y) / double(h) + double(kx * xx) / double(w));
                            acc += x.at(b, c, y, xx) *
                                   std::complex<double>(std::cos(ang), std::sin(ang));
                        }
                    re.at(b, c, ky, kx) = acc.real();
                    im.at(b, c, ky, kx) = acc.imag();
                }
    return {re, im};
}

} // namespace

TEST_CASE("constant image has a DC-only spectrum") {
    TensorD x = TensorD::full({1, 1, 4, 4}, 3.0);
    auto f = fft::fft2(x);
    CHECK(f.real[0] == doctest::Approx(16.0 * 3.0).epsilon(1e-12));
    CHECK(std::abs(f.imag[0]) < 1e-12);
    for (int64_t i = 1; i < 16; ++i) {
        CHECK(std::abs(f.real[i]) < 1e-10);
        CHECK(std::abs(f.imag[i]) < 1e-10);
    }
}

TEST_CASE("roundtrip on non-power-of-two sizes") {
    Rng rng(1);
    TensorD x = random_tensor<double>({1, 2, 5, 7}, rng);
    TensorD back = fft::ifft2(fft::fft2(x));
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-10);
}

TEST_CASE("roundtrip across the size grid") {
    Rng rng(2);
    for (int64_t h : {1, 2, 3, 4, 5, 6, 7, 8, 9, 16, 24}) {
        for (int64_t w : {1, 2, 3, 4, 5, 6, 7, 8, 9, 16, 24}) {
            TensorD x = random_tensor<double>({1, 1, h, w}, rng);
            TensorD back = fft::ifft2(fft::fft2(x));
            double err = 0;
            for (int64_t i = 0; i < x.numel(); ++i)
                err = std::max(err, std::abs(back[i] - x[i]));
            INFO("size ", h, "x", w);
            CHECK(err < 1e-10);
        }
    }
}

TEST_CASE("matches the direct DFT oracle on 8x8") {
    Rng rng(3);
    TensorD x = random_tensor<double>({1, 1, 8, 8}, rng);
    auto got = fft::fft2(x);
    auto want = dft2_oracle(x);
    for (int64_t i = 0; i < x.numel(); ++i) {
        CHECK(std::abs(got.real[i] - want.real[i]) < 1e-9);
        CHECK(std::abs(got.imag[i] - want.imag[i]) < 1e-9);
    }
}

TEST_CASE("oracle agreement on awkward sizes") {
    Rng rng(4);
    for (auto [h, w] : {std::pair<int64_t, int64_t>{6, 5}, {7, 7}, {9, 4}}) {
        TensorD x = random_tensor<double>({1, 1, h, w}, rng);
        auto got = fft::fft2(x);
        auto want = dft2_oracle(x);
        for (int64_t i = 0; i < x.numel(); ++i) {
            CHECK(std::abs(got.real[i] - want.real[i]) < 1e-9);
            CHECK(std::abs(got.imag[i] - want.imag[i]) < 1e-9);
        }
    }
}

TEST_CASE("Parseval: ||x||^2 = ||X||^2 / (HW)") {
    Rng rng(5);
    for (auto [h, w] : {std::pair<int64_t, int64_t>{8, 8}, {5, 7}, {9, 16}}) {
        TensorD x = random_tensor<double>({1, 1, h, w}, rng);
        auto f = fft::fft2(x);
        double spatial = 0, spectral = 0;
        for (int64_t i = 0; i < x.numel(); ++i) {
            spatial += x[i] * x[i];
            spectral += f.real[i] * f.real[i] + f.imag[i] * f.imag[i];
        }
        spectral /= static_cast<double>(h * w);
        CHECK(std::abs(spatial - spectral) / spatial < 1e-8);
    }
}

TEST_CASE("float roundtrip stays within 1e-5") {
    Rng rng(6);
    TensorF x({1, 1, 12, 10});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
    TensorF back = fft::ifft2(fft::fft2(x));
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-5f);
}

TEST_CASE("fft invocation counter") {
    TensorD x = TensorD::full({1, 1, 4, 4}, 1.0);
    CounterScope scope;
    auto f = fft::fft2(x);
    fft::ifft2(f);
    CHECK(scope.fft_calls() == 2);
}
