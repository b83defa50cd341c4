#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "cpat/png.hpp"
#include "cpat/rng.hpp"
#include "cpat/tensor.hpp"

// LR/HR pair synthesis: bicubic degradation, seeded patch sampling, and a
// deterministic synthetic dataset whose images carry directional texture
// (gratings, rectangles, band-limited noise).
//
// Normalization contract: tensors entering the model live in [0,1]; metric
// code rescales to [0,255] exactly once.

namespace cpat::data {

template <typename T>
Tensor<T> image_to_tensor(const ImageRGB& img) {
    Tensor<T> t({3, img.height, img.width});
    const int64_t hw = img.height * img.width;
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x)
            for (int64_t c = 0; c < 3; ++c)
                t[c * hw + y * img.width + x] =
                    static_cast<T>(img.at(y, x, c)) / T(255);
    return t;
}

// Clamps to [0,1] and rounds half away from zero to 8 bits.
template <typename T>
ImageRGB tensor_to_image(const Tensor<T>& t) {
    if (t.rank() != 3 || t.dim(0) != 3)
        throw ShapeError(cat("tensor_to_image: expected [3,H,W], got ", shape_str(t.shape())));
    ImageRGB img;
    img.height = t.dim(1);
    img.width = t.dim(2);
    img.pixels.resize(static_cast<size_t>(img.width * img.height * 3));
    const int64_t hw = img.height * img.width;
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                const double v = std::clamp(static_cast<double>(t[c * hw + y * img.width + x]),
                                            0.0, 1.0);
                img.at(y, x, c) = static_cast<uint8_t>(std::lround(v * 255.0));
            }
    return img;
}

namespace detail {

// Catmull-Rom style cubic, a = -0.5.
inline double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

struct ResampleTap {
    int64_t first;
    std::vector<double> weights;
};

// One axis of the separable resize. When shrinking, the kernel is widened
// by the scale ratio (antialias) and weights renormalized; source indices
// clamp at the edges.
inline std::vector<ResampleTap> resample_taps(int64_t in_len, int64_t out_len) {
    const double ratio = static_cast<double>(in_len) / static_cast<double>(out_len);
    const double support_scale = std::max(1.0, ratio);
    const double support = 2.0 * support_scale;
    std::vector<ResampleTap> taps(static_cast<size_t>(out_len));
    for (int64_t o = 0; o < out_len; ++o) {
        const double center = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        int64_t lo = static_cast<int64_t>(std::floor(center - support)) + 1;
        int64_t hi = static_cast<int64_t>(std::floor(center + support));
        ResampleTap tap;
        tap.first = lo;
        double sum = 0.0;
        for (int64_t i = lo; i <= hi; ++i) {
            const double wv = cubic_kernel((static_cast<double>(i) - center) / support_scale);
            tap.weights.push_back(wv);
            sum += wv;
        }
        for (double& wv : tap.weights) wv /= sum;
        taps[static_cast<size_t>(o)] = std::move(tap);
    }
    return taps;
}

} // namespace detail

// Separable bicubic resize of a [C,H,W] tensor; edge-clamped, antialiased
// when shrinking.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, int64_t out_h, int64_t out_w) {
    if (img.rank() != 3)
        throw ShapeError(cat("bicubic_resize: expected [C,H,W], got ", shape_str(img.shape())));
    if (out_h < 1 || out_w < 1)
        throw ShapeError(cat("bicubic_resize: target ", out_h, "x", out_w));
    const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);

    const auto tx = detail::resample_taps(w, out_w);
    Tensor<T> mid({c, h, out_w});
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t o = 0; o < out_w; ++o) {
                const auto& tap = tx[static_cast<size_t>(o)];
                double acc = 0.0;
                for (size_t k = 0; k < tap.weights.size(); ++k) {
                    const int64_t sx =
                        std::clamp<int64_t>(tap.first + static_cast<int64_t>(k), 0, w - 1);
                    acc += tap.weights[k] * static_cast<double>(img[(ch * h + y) * w + sx]);
                }
                mid[(ch * h + y) * out_w + o] = static_cast<T>(acc);
            }

    const auto ty = detail::resample_taps(h, out_h);
    Tensor<T> out({c, out_h, out_w});
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t o = 0; o < out_h; ++o) {
            const auto& tap = ty[static_cast<size_t>(o)];
            for (int64_t x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (size_t k = 0; k < tap.weights.size(); ++k) {
                    const int64_t sy =
                        std::clamp<int64_t>(tap.first + static_cast<int64_t>(k), 0, h - 1);
                    acc += tap.weights[k] * static_cast<double>(mid[(ch * h + sy) * out_w + x]);
                }
                out[(ch * out_h + o) * out_w + x] = static_cast<T>(acc);
            }
        }
    return out;
}

template <typename T>
struct PatchPair {
    Tensor<T> lr; // [3, p, p], values in [0,1]
    Tensor<T> hr; // [3, s*p, s*p]
};

// Seeded stream of aligned HR crops with bicubic-downscaled LR partners.
// Images smaller than one HR patch are skipped with a warning. The stream
// hash folds the source geometry and HR patch bytes, so two arms fed the
// same seed can prove they saw identical data.
template <typename T>
class PairStream {
public:
    PairStream(std::vector<ImageRGB> images, int64_t scale, int64_t patch, uint64_t seed)
        : scale_(scale), patch_(patch), rng_(seed) {
        const int64_t hr_size = scale * patch;
        for (auto& img : images) {
            if (img.width < hr_size || img.height < hr_size) {
                std::cerr << "warning: skipping " << img.width << "x" << img.height
                          << " image smaller than one " << hr_size << "x" << hr_size
                          << " patch\n";
                continue;
            }
            images_.push_back(std::move(img));
        }
        if (images_.empty())
            throw DataError(cat("no usable images: every input is smaller than ",
                                hr_size, "x", hr_size));
    }

    PatchPair<T> next() {
        const int64_t hr_size = scale_ * patch_;
        const int64_t idx = rng_.uniform_int(static_cast<int64_t>(images_.size()));
        const ImageRGB& img = images_[static_cast<size_t>(idx)];
        // aligned crop origin: a multiple of scale
        const int64_t ymax = (img.height - hr_size) / scale_;
        const int64_t xmax = (img.width - hr_size) / scale_;
        const int64_t y0 = scale_ * rng_.uniform_int(ymax + 1);
        const int64_t x0 = scale_ * rng_.uniform_int(xmax + 1);

        fold_hash(static_cast<uint64_t>(idx));
        fold_hash(static_cast<uint64_t>(y0));
        fold_hash(static_cast<uint64_t>(x0));

        Tensor<T> hr({3, hr_size, hr_size});
        const int64_t hw = hr_size * hr_size;
        for (int64_t y = 0; y < hr_size; ++y)
            for (int64_t x = 0; x < hr_size; ++x)
                for (int64_t ch = 0; ch < 3; ++ch) {
                    const uint8_t v = img.at(y0 + y, x0 + x, ch);
                    fold_hash(v);
                    hr[ch * hw + y * hr_size + x] = static_cast<T>(v) / T(255);
                }
        return {bicubic_resize(hr, patch_, patch_), std::move(hr)};
    }

    uint64_t stream_hash() const { return hash_; }

private:
    void fold_hash(uint64_t v) {
        // FNV-1a over the 8 bytes
        for (int i = 0; i < 8; ++i) {
            hash_ ^= (v >> (8 * i)) & 0xff;
            hash_ *= 0x100000001b3ULL;
        }
    }

    std::vector<ImageRGB> images_;
    int64_t scale_;
    int64_t patch_;
    Rng rng_;
    uint64_t hash_ = 0xcbf29ce484222325ULL;
};

// ------------------------------------------------------ synthetic dataset

namespace detail {

inline ImageRGB grating_image(int64_t size, Rng& rng) {
    ImageRGB img;
    img.width = img.height = size;
    img.pixels.resize(static_cast<size_t>(size * size * 3));
    // integer frequencies keep the spectrum on exact bins
    const int64_t max_f = std::max<int64_t>(1, size / 8);
    int64_t fx = rng.uniform_int(max_f + 1);
    int64_t fy = rng.uniform_int(max_f + 1);
    if (fx == 0 && fy == 0) fx = 1;
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double amp = rng.uniform(0.25, 0.45);
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            const double v = 0.5 + amp * std::sin(2.0 * M_PI *
                                                      (static_cast<double>(fx * x + fy * y) /
                                                       static_cast<double>(size)) +
                                                  phase);
            const uint8_t b = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255));
            for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = b;
        }
    return img;
}

inline ImageRGB rectangles_image(int64_t size, Rng& rng) {
    ImageRGB img;
    img.width = img.height = size;
    img.pixels.resize(static_cast<size_t>(size * size * 3));
    uint8_t base[3];
    for (auto& b : base) b = static_cast<uint8_t>(rng.uniform_int(256));
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x)
            for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = base[c];
    const int64_t count = 5 + rng.uniform_int(6);
    for (int64_t r = 0; r < count; ++r) {
        const int64_t x0 = rng.uniform_int(size);
        const int64_t y0 = rng.uniform_int(size);
        const int64_t rw = 1 + rng.uniform_int(size / 2);
        const int64_t rh = 1 + rng.uniform_int(size / 2);
        uint8_t col[3];
        for (auto& b : col) b = static_cast<uint8_t>(rng.uniform_int(256));
        for (int64_t y = y0; y < std::min(size, y0 + rh); ++y)
            for (int64_t x = x0; x < std::min(size, x0 + rw); ++x)
                for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
    }
    return img;
}

inline ImageRGB bandlimited_noise_image(int64_t size, Rng& rng) {
    // coarse white noise upsampled with the bicubic kernel = low-pass content
    const int64_t coarse = std::max<int64_t>(2, size / 8);
    Tensor<double> noise({3, coarse, coarse});
    for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = rng.uniform();
    Tensor<double> up = bicubic_resize(noise, size, size);
    for (int64_t i = 0; i < up.numel(); ++i) up[i] = std::clamp(up[i], 0.0, 1.0);
    return tensor_to_image(up);
}

} // namespace detail

// n seeded images of three texture families, cycling grating / rectangles /
// band-limited noise.
inline std::vector<ImageRGB> synth_dataset(int64_t n, int64_t size, uint64_t seed) {
    Rng rng(seed);
    std::vector<ImageRGB> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        switch (i % 3) {
            case 0: out.push_back(detail::grating_image(size, rng)); break;
            case 1: out.push_back(detail::rectangles_image(size, rng)); break;
            default: out.push_back(detail::bandlimited_noise_image(size, rng)); break;
        }
    }
    return out;
}

// Manifest file: one PNG path per line, utf-8, '#' comments allowed.
std::vector<ImageRGB> load_manifest(const std::string& path);

} // namespace cpat::data
