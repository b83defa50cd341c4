#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cpat/attention.hpp"
#include "cpat/instrument.hpp"
#include "cpat/ops.hpp"

// Complexity accounting and image-quality metrics: the closed-form MAC
// models for global vs column-window attention, an instrumented empirical
// counter, PSNR/SSIM on the Y channel, and the eight-transform self-ensemble.

namespace cpat::analysis {

// ------------------------------------------------------------ FLOPs model

// 4HW(C/3)^2 + 2(HW)^2 (C/3)
inline uint64_t flops_global_msa(uint64_t h, uint64_t w, uint64_t c) {
    if (h == 0 || w == 0 || c == 0 || c % 3 != 0)
        throw ConfigError(cat("flops_global_msa: bad arguments H=", h, " W=", w, " C=", c));
    const uint64_t c3 = c / 3;
    const uint64_t hw = h * w;
    return 4 * hw * c3 * c3 + 2 * hw * hw * c3;
}

// 4HW(C/3)^2 + 2H^2 W ws (C/3)
inline uint64_t flops_vewin(uint64_t h, uint64_t w, uint64_t c, uint64_t ws) {
    if (h == 0 || w == 0 || c == 0 || ws == 0 || c % 3 != 0)
        throw ConfigError(cat("flops_vewin: bad arguments H=", h, " W=", w, " C=", c,
                              " ws=", ws));
    const uint64_t c3 = c / 3;
    return 4 * h * w * c3 * c3 + 2 * h * h * w * ws * c3;
}

struct FlopsReport {
    std::vector<std::pair<std::string, uint64_t>> rows;

    void add(const std::string& component, uint64_t macs) { rows.emplace_back(component, macs); }

    uint64_t total() const {
        uint64_t t = 0;
        for (const auto& [_, v] : rows) t += v;
        return t;
    }

    // two-column text table, last line is the summed total
    std::string table() const {
        std::string out;
        size_t width = 5; // "total"
        for (const auto& [name, _] : rows) width = std::max(width, name.size());
        for (const auto& [name, v] : rows) {
            out += name;
            out.append(width - name.size() + 2, ' ');
            out += std::to_string(v);
            out += '\n';
        }
        out += "total";
        out.append(width - 5 + 2, ' ');
        out += std::to_string(total());
        out += '\n';
        return out;
    }
};

// MACs actually executed by one bare windowed attention (projections,
// QK^T, AV; no CPE, softmax and scaling are not multiply-accumulates).
// Channel count c is the full block width; the branch sees c/3 of it.
template <typename T>
uint64_t measure_attention_macs(int64_t h, int64_t w, int64_t c, int64_t heads, int64_t ws,
                                WindowKind kind) {
    if (c % 3 != 0) throw ConfigError(cat("measure_attention_macs: C = ", c));
    const int64_t c3 = c / 3;
    ag::Tape<T> tape;
    auto leaf = [&](std::vector<int64_t> shape) { return tape.leaf(Tensor<T>(shape)); };
    AttentionVars<T> vars{leaf({c3, c3}), leaf({c3}), leaf({c3, c3}), leaf({c3}),
                          leaf({c3, c3}), leaf({c3}), leaf({c3, c3}), leaf({c3}), heads};
    ag::Var<T> x = leaf({1, c3, h, w});

    WindowSpec spec = kind == WindowKind::VerticalEnhanced
                          ? WindowSpec::vertical_enhanced(h, ws)
                          : kind == WindowKind::HorizontalEnhanced
                                ? WindowSpec::horizontal_enhanced(w, ws)
                                : WindowSpec::squared(ws);
    CounterScope scope;
    ag::Var<T> tokens = ag::to_tokens(ag::partition(x, spec));
    auto res = ag::window_mhsa(tokens, vars);
    ag::merge(ag::from_tokens(res.out, spec.win_h, spec.win_w), spec, h, w);
    return scope.macs();
}

// ------------------------------------------------------------------ metrics

struct QualityScore {
    double psnr_db = 0.0;
    double ssim = 0.0;
};

// ITU-R BT.601 studio swing: Y = 16 + 65.481 R' + 128.553 G' + 24.966 B',
// inputs in [0,255], output in [16,235].
template <typename T>
Tensor<T> rgb_to_y(const Tensor<T>& img) {
    if (img.rank() != 3 || img.dim(0) != 3)
        throw ShapeError(cat("rgb_to_y: expected [3,H,W], got ", shape_str(img.shape())));
    const int64_t h = img.dim(1), w = img.dim(2);
    Tensor<T> y({1, h, w});
    const int64_t hw = h * w;
    for (int64_t i = 0; i < hw; ++i) {
        const T r = img[i] / T(255), g = img[hw + i] / T(255), b = img[2 * hw + i] / T(255);
        y[i] = static_cast<T>(65.481) * r + static_cast<T>(128.553) * g +
               static_cast<T>(24.966) * b + T(16);
    }
    return y;
}

namespace detail {

template <typename T>
Tensor<T> crop_border(const Tensor<T>& x, int64_t crop) {
    if (crop == 0) return x;
    const int64_t r = x.rank();
    if (r < 2) throw ShapeError(cat("metrics: rank ", r, " input"));
    const int64_t h = x.dim(r - 2), w = x.dim(r - 1);
    if (2 * crop >= h || 2 * crop >= w)
        throw ShapeError(cat("metrics: crop ", crop, " leaves no pixels of ",
                             shape_str(x.shape())));
    const int64_t c = x.numel() / (h * w);
    Tensor<T> out = [&] {
        std::vector<int64_t> s = x.shape();
        s[r - 2] = h - 2 * crop;
        s[r - 1] = w - 2 * crop;
        return Tensor<T>(s);
    }();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h - 2 * crop; ++y)
            for (int64_t xx = 0; xx < w - 2 * crop; ++xx)
                out[(ch * (h - 2 * crop) + y) * (w - 2 * crop) + xx] =
                    x[(ch * h + y + crop) * w + xx + crop];
    return out;
}

inline std::vector<double> gaussian_window(int64_t size, double sigma) {
    std::vector<double> g(static_cast<size_t>(size));
    const double c = static_cast<double>(size - 1) / 2.0;
    double sum = 0.0;
    for (int64_t i = 0; i < size; ++i) {
        g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

} // namespace detail

// 10 log10(max^2 / MSE) after trimming crop pixels from each border;
// identical inputs report +inf rather than failing.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double max_val = 255.0, int64_t crop = 0) {
    if (!a.same_shape(b))
        throw ShapeError(cat("psnr: ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    Tensor<T> ca = detail::crop_border(a, crop);
    Tensor<T> cb = detail::crop_border(b, crop);
    double mse = 0.0;
    for (int64_t i = 0; i < ca.numel(); ++i) {
        const double d = static_cast<double>(ca[i]) - static_cast<double>(cb[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(ca.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_val * max_val / mse);
}

// Single-channel SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// valid-mode (no padding): the score is the mean of the local map over
// positions where the window fits.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double max_val = 255.0, int64_t crop = 0) {
    if (!a.same_shape(b))
        throw ShapeError(cat("ssim: ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    if (!(a.rank() == 2 || (a.rank() == 3 && a.dim(0) == 1)))
        throw ShapeError(cat("ssim: expected one channel, got ", shape_str(a.shape())));
    Tensor<T> ca = detail::crop_border(a, crop);
    Tensor<T> cb = detail::crop_border(b, crop);
    const int64_t h = ca.dim(ca.rank() - 2), w = ca.dim(ca.rank() - 1);
    constexpr int64_t win = 11;
    if (h < win || w < win)
        throw ShapeError(cat("ssim: image ", h, "x", w, " smaller than the ", win, "x", win,
                             " window"));
    const std::vector<double> g = detail::gaussian_window(win, 1.5);
    const double c1 = (0.01 * max_val) * (0.01 * max_val);
    const double c2 = (0.03 * max_val) * (0.03 * max_val);

    double acc = 0.0;
    int64_t count = 0;
    for (int64_t y = 0; y + win <= h; ++y) {
        for (int64_t x = 0; x + win <= w; ++x) {
            double mu_a = 0, mu_b = 0;
            for (int64_t i = 0; i < win; ++i)
                for (int64_t j = 0; j < win; ++j) {
                    const double wij = g[i] * g[j];
                    mu_a += wij * static_cast<double>(ca[(y + i) * w + (x + j)]);
                    mu_b += wij * static_cast<double>(cb[(y + i) * w + (x + j)]);
                }
            double var_a = 0, var_b = 0, cov = 0;
            for (int64_t i = 0; i < win; ++i)
                for (int64_t j = 0; j < win; ++j) {
                    const double wij = g[i] * g[j];
                    const double da = static_cast<double>(ca[(y + i) * w + (x + j)]) - mu_a;
                    const double db = static_cast<double>(cb[(y + i) * w + (x + j)]) - mu_b;
                    var_a += wij * da * da;
                    var_b += wij * db * db;
                    cov += wij * da * db;
                }
            const double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += num / den;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

// ------------------------------------------------------------ self-ensemble

// Averages the model over the 8 dihedral transforms of the input, inverting
// each transform on the corresponding output. forward must be scale-
// preserving in the sense that output dims are a fixed multiple of input dims.
template <typename T>
Tensor<T> self_ensemble(const std::function<Tensor<T>(const Tensor<T>&)>& forward,
                        const Tensor<T>& ilr) {
    std::vector<Tensor<T>> outs;
    outs.reserve(8);
    for (int flip = 0; flip < 2; ++flip) {
        for (int rot = 0; rot < 4; ++rot) {
            Tensor<T> in = flip ? ops::flip_w(ilr) : ilr;
            in = ops::rot90_hw(in, rot);
            Tensor<T> out = forward(in);
            out = ops::rot90_hw(out, -rot);
            if (flip) out = ops::flip_w(out);
            outs.push_back(std::move(out));
        }
    }
    // pairwise reduction: sums of equal values stay exact powers of two
    for (int64_t width = 8; width > 1; width /= 2)
        for (int64_t i = 0; i < width / 2; ++i)
            outs[i] = ops::add(outs[2 * i], outs[2 * i + 1]);
    return ops::scale(outs[0], T(1) / T(8));
}

} // namespace cpat::analysis
