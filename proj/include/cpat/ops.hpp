#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "cpat/instrument.hpp"
#include "cpat/tensor.hpp"

// Dense forward kernels. Everything is row-major, NCHW for feature maps,
// cross-correlation convention with zero padding for convolutions.

namespace cpat::ops {

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError(cat("add: ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError(cat("sub: ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError(cat("mul: ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    return out;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = std::abs(a[i]);
    return out;
}

template <typename T>
T sum_all(const Tensor<T>& a) {
    T s = 0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a[i];
    return s;
}

template <typename T>
T mean_all(const Tensor<T>& a) {
    return sum_all(a) / static_cast<T>(a.numel());
}

template <typename T>
T max_abs(const Tensor<T>& a) {
    T m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

// Broadcast a length-C vector over the last dimension.
template <typename T>
Tensor<T> add_bias_last(const Tensor<T>& x, const Tensor<T>& bias) {
    const int64_t c = x.dim(x.rank() - 1);
    if (bias.rank() != 1 || bias.dim(0) != c)
        throw ShapeError(cat("add_bias_last: bias ", shape_str(bias.shape()),
                             " does not match last dim of ", shape_str(x.shape())));
    Tensor<T> out(x.shape());
    const int64_t rows = x.numel() / c;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) out[r * c + j] = x[r * c + j] + bias[j];
    return out;
}

// ------------------------------------------------------------------- matmul

// a: [M,K] x b: [K,N], or batched lhs [...,M,K] against a 2-D rhs, or two
// equally batched operands [...,M,K] x [...,K,N].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeError(cat("matmul: ranks must be >= 2, got ", shape_str(a.shape()), " x ",
                             shape_str(b.shape())));
    const int64_t m = a.dim(a.rank() - 2);
    const int64_t k = a.dim(a.rank() - 1);
    const int64_t kb = b.dim(b.rank() - 2);
    const int64_t n = b.dim(b.rank() - 1);
    if (k != kb)
        throw ShapeError(cat("matmul: inner dimensions disagree: ", shape_str(a.shape()), " x ",
                             shape_str(b.shape())));

    const int64_t batch = a.numel() / (m * k);
    bool batched_rhs;
    if (b.rank() == 2) {
        batched_rhs = false;
    } else {
        std::vector<int64_t> lead_a(a.shape().begin(), a.shape().end() - 2);
        std::vector<int64_t> lead_b(b.shape().begin(), b.shape().end() - 2);
        if (lead_a != lead_b)
            throw ShapeError(cat("matmul: batch dimensions disagree: ", shape_str(a.shape()),
                                 " x ", shape_str(b.shape())));
        batched_rhs = true;
    }

    std::vector<int64_t> out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
    Tensor<T> out(out_shape);

    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t bt = 0; bt < batch; ++bt) {
        const T* ab = pa + bt * m * k;
        const T* bb = batched_rhs ? pb + bt * k * n : pb;
        T* ob = po + bt * m * n;
        for (int64_t i = 0; i < m; ++i) {
            T* orow = ob + i * n;
            for (int64_t kk = 0; kk < k; ++kk) {
                const T av = ab[i * k + kk];
                const T* brow = bb + kk * n;
                for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    }
    CounterScope::add_macs(static_cast<uint64_t>(batch) * m * k * n);
    return out;
}

// ------------------------------------------------------------------ softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int64_t axis) {
    if (axis < 0) axis += x.rank();
    if (axis < 0 || axis >= x.rank())
        throw ShapeError(cat("softmax: axis ", axis, " out of range for ", shape_str(x.shape())));
    const int64_t len = x.dim(axis);
    int64_t inner = 1;
    for (int64_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    const int64_t outer = x.numel() / (len * inner);

    Tensor<T> out(x.shape());
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * len * inner + in;
            T mx = x[base];
            for (int64_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
            T denom = 0;
            for (int64_t i = 0; i < len; ++i) {
                const T e = std::exp(x[base + i * inner] - mx);
                out[base + i * inner] = e;
                denom += e;
            }
            for (int64_t i = 0; i < len; ++i) out[base + i * inner] /= denom;
        }
    }
    return out;
}

// --------------------------------------------------------------- layer norm

// Normalizes the last dimension to zero mean / unit variance, then applies
// the affine pair. eps sits under the square root, so constant tokens map to
// beta exactly.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = static_cast<T>(1e-5)) {
    const int64_t c = x.dim(x.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
        throw ShapeError(cat("layer_norm: affine shapes ", shape_str(gamma.shape()), "/",
                             shape_str(beta.shape()), " do not match channels of ",
                             shape_str(x.shape())));
    Tensor<T> out(x.shape());
    const int64_t rows = x.numel() / c;
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * c;
        T* orow = out.data() + r * c;
        T mean = 0;
        for (int64_t j = 0; j < c; ++j) mean += xr[j];
        mean /= static_cast<T>(c);
        T var = 0;
        for (int64_t j = 0; j < c; ++j) {
            const T d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T inv = T(1) / std::sqrt(var + eps);
        for (int64_t j = 0; j < c; ++j) orow[j] = (xr[j] - mean) * inv * gamma[j] + beta[j];
    }
    return out;
}

// ------------------------------------------------------------- convolutions

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k,
                 std::type_identity_t<const Tensor<T>*> bias = nullptr,
                 int64_t stride = 1, int64_t pad = -1) {
    if (x.rank() != 4 || k.rank() != 4)
        throw ShapeError(cat("conv2d: expected NCHW input and OIHW kernel, got ",
                             shape_str(x.shape()), " and ", shape_str(k.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t o = k.dim(0), kc = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    if (kc != c)
        throw ShapeError(cat("conv2d: input has ", c, " channels but kernel expects ", kc));
    if (bias && (bias->rank() != 1 || bias->dim(0) != o))
        throw ShapeError(cat("conv2d: bias ", shape_str(bias->shape()), " vs ", o, " outputs"));
    if (pad < 0) pad = kh / 2; // same-padding for odd kernels at stride 1
    const int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const int64_t ow = (w + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0)
        throw ShapeError(cat("conv2d: empty output for input ", shape_str(x.shape()),
                             " kernel ", shape_str(k.shape()), " stride ", stride, " pad ", pad));

    Tensor<T> out({n, o, oh, ow});
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t oc = 0; oc < o; ++oc) {
            const T bv = bias ? (*bias)[oc] : T(0);
            for (int64_t y = 0; y < oh; ++y) {
                for (int64_t xx = 0; xx < ow; ++xx) {
                    T acc = bv;
                    for (int64_t ic = 0; ic < c; ++ic) {
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            const int64_t iy = y * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t ix = xx * stride + kx - pad;
                                if (ix < 0 || ix >= w) continue;
                                acc += x.at(b, ic, iy, ix) * k.at(oc, ic, ky, kx);
                            }
                        }
                    }
                    out.at(b, oc, y, xx) = acc;
                }
            }
        }
    }
    CounterScope::add_macs(static_cast<uint64_t>(n) * o * oh * ow * c * kh * kw);
    return out;
}

// Per-channel convolution, shape preserved with same-padding. Kernel layout
// [C,1,kh,kw]; channels never mix.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& k,
                           std::type_identity_t<const Tensor<T>*> bias = nullptr,
                           int64_t pad = -1) {
    if (x.rank() != 4 || k.rank() != 4 || k.dim(1) != 1)
        throw ShapeError(cat("depthwise_conv2d: expected NCHW input and [C,1,kh,kw] kernel, got ",
                             shape_str(x.shape()), " and ", shape_str(k.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t kh = k.dim(2), kw = k.dim(3);
    if (k.dim(0) != c)
        throw ShapeError(cat("depthwise_conv2d: input has ", c, " channels but kernel has ",
                             k.dim(0)));
    if (bias && (bias->rank() != 1 || bias->dim(0) != c))
        throw ShapeError(cat("depthwise_conv2d: bias ", shape_str(bias->shape()), " vs ", c,
                             " channels"));
    if (pad < 0) pad = kh / 2;

    Tensor<T> out({n, c, h, w});
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const T bv = bias ? (*bias)[ch] : T(0);
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t xx = 0; xx < w; ++xx) {
                    T acc = bv;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = y + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = xx + kx - pad;
                            if (ix < 0 || ix >= w) continue;
                            acc += x.at(b, ch, iy, ix) * k.at(ch, int64_t(0), ky, kx);
                        }
                    }
                    out.at(b, ch, y, xx) = acc;
                }
            }
        }
    }
    CounterScope::add_macs(static_cast<uint64_t>(n) * c * h * w * kh * kw);
    return out;
}

// -------------------------------------------------------------- activations

// tanh approximation of GELU
template <typename T>
inline T gelu_scalar(T x) {
    constexpr T kSqrt2OverPi = static_cast<T>(0.7978845608028654);
    const T u = kSqrt2OverPi * (x + static_cast<T>(0.044715) * x * x * x);
    return static_cast<T>(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = gelu_scalar(x[i]);
    return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = static_cast<T>(0.2)) {
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] >= T(0) ? x[i] : slope * x[i];
    return out;
}

// ------------------------------------------------------------ pixel shuffle

// out(n, c, r*h+dy, r*w+dx) = in(n, c*r^2 + dy*r + dx, h, w)
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int64_t r) {
    if (x.rank() != 4)
        throw ShapeError(cat("pixel_shuffle: expected NCHW, got ", shape_str(x.shape())));
    const int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (r < 1 || c_in % (r * r) != 0)
        throw ShapeError(cat("pixel_shuffle: ", c_in, " channels not divisible by r^2 = ", r * r));
    const int64_t c = c_in / (r * r);
    Tensor<T> out({n, c, h * r, w * r});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t dy = 0; dy < r; ++dy)
                for (int64_t dx = 0; dx < r; ++dx)
                    for (int64_t y = 0; y < h; ++y)
                        for (int64_t xx = 0; xx < w; ++xx)
                            out.at(b, ch, r * y + dy, r * xx + dx) =
                                x.at(b, ch * r * r + dy * r + dx, y, xx);
    return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int64_t r) {
    if (x.rank() != 4)
        throw ShapeError(cat("pixel_unshuffle: expected NCHW, got ", shape_str(x.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), hr = x.dim(2), wr = x.dim(3);
    if (r < 1 || hr % r != 0 || wr % r != 0)
        throw ShapeError(cat("pixel_unshuffle: spatial dims of ", shape_str(x.shape()),
                             " not divisible by ", r));
    Tensor<T> out({n, c * r * r, hr / r, wr / r});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t dy = 0; dy < r; ++dy)
                for (int64_t dx = 0; dx < r; ++dx)
                    for (int64_t y = 0; y < hr / r; ++y)
                        for (int64_t xx = 0; xx < wr / r; ++xx)
                            out.at(b, ch * r * r + dy * r + dx, y, xx) =
                                x.at(b, ch, r * y + dy, r * xx + dx);
    return out;
}

// ------------------------------------------------------- layout and slicing

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int64_t>& axes) {
    if (static_cast<int64_t>(axes.size()) != x.rank())
        throw ShapeError(cat("permute: ", axes.size(), " axes for rank ", x.rank()));
    const int64_t r = x.rank();
    std::vector<int64_t> out_shape(r);
    for (int64_t d = 0; d < r; ++d) out_shape[d] = x.dim(axes[d]);
    Tensor<T> out(out_shape);

    std::vector<int64_t> in_strides(r, 1), out_strides(r, 1);
    for (int64_t d = r - 2; d >= 0; --d) in_strides[d] = in_strides[d + 1] * x.dim(d + 1);
    for (int64_t d = r - 2; d >= 0; --d) out_strides[d] = out_strides[d + 1] * out_shape[d + 1];

    std::vector<int64_t> idx(r, 0);
    for (int64_t flat = 0; flat < out.numel(); ++flat) {
        int64_t rem = flat;
        int64_t src = 0;
        for (int64_t d = 0; d < r; ++d) {
            const int64_t i = rem / out_strides[d];
            rem -= i * out_strides[d];
            src += i * in_strides[axes[d]];
        }
        out[flat] = x[src];
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const auto& s0 = parts[0].shape();
    if (parts[0].rank() != 4) throw ShapeError("concat_channels: expected NCHW inputs");
    int64_t c_total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 4 || p.dim(0) != s0[0] || p.dim(2) != s0[2] || p.dim(3) != s0[3])
            throw ShapeError(cat("concat_channels: incompatible part ", shape_str(p.shape()),
                                 " vs ", shape_str(s0)));
        c_total += p.dim(1);
    }
    Tensor<T> out({s0[0], c_total, s0[2], s0[3]});
    const int64_t hw = s0[2] * s0[3];
    for (int64_t b = 0; b < s0[0]; ++b) {
        int64_t c_off = 0;
        for (const auto& p : parts) {
            const int64_t pc = p.dim(1);
            std::copy(p.data() + b * pc * hw, p.data() + (b + 1) * pc * hw,
                      out.data() + (b * c_total + c_off) * hw);
            c_off += pc;
        }
    }
    return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t c_begin, int64_t c_end) {
    if (x.rank() != 4)
        throw ShapeError(cat("slice_channels: expected NCHW, got ", shape_str(x.shape())));
    if (c_begin < 0 || c_end > x.dim(1) || c_begin >= c_end)
        throw ShapeError(cat("slice_channels: range [", c_begin, ",", c_end, ") invalid for ",
                             shape_str(x.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const int64_t cs = c_end - c_begin;
    Tensor<T> out({n, cs, x.dim(2), x.dim(3)});
    for (int64_t b = 0; b < n; ++b)
        std::copy(x.data() + (b * c + c_begin) * hw, x.data() + (b * c + c_end) * hw,
                  out.data() + b * cs * hw);
    return out;
}

// ----------------------------------------------------------- pad/crop (H,W)

// Mirror padding without repeating the edge sample; requires pad < dim.
template <typename T>
Tensor<T> pad_reflect_hw(const Tensor<T>& x, int64_t pad_bottom, int64_t pad_right) {
    if (x.rank() != 4)
        throw ShapeError(cat("pad_reflect_hw: expected NCHW, got ", shape_str(x.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (pad_bottom < 0 || pad_right < 0 || pad_bottom >= h || pad_right >= w)
        throw ShapeError(cat("pad_reflect_hw: pads (", pad_bottom, ",", pad_right,
                             ") out of range for ", shape_str(x.shape())));
    Tensor<T> out({n, c, h + pad_bottom, w + pad_right});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h + pad_bottom; ++y) {
                const int64_t sy = y < h ? y : 2 * h - 2 - y;
                for (int64_t xx = 0; xx < w + pad_right; ++xx) {
                    const int64_t sx = xx < w ? xx : 2 * w - 2 - xx;
                    out.at(b, ch, y, xx) = x.at(b, ch, sy, sx);
                }
            }
    return out;
}

template <typename T>
Tensor<T> crop_hw(const Tensor<T>& x, int64_t h, int64_t w) {
    if (x.rank() != 4)
        throw ShapeError(cat("crop_hw: expected NCHW, got ", shape_str(x.shape())));
    if (h > x.dim(2) || w > x.dim(3) || h < 1 || w < 1)
        throw ShapeError(cat("crop_hw: target ", h, "x", w, " vs ", shape_str(x.shape())));
    const int64_t n = x.dim(0), c = x.dim(1);
    Tensor<T> out({n, c, h, w});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y)
                std::copy(&x.at(b, ch, y, int64_t(0)), &x.at(b, ch, y, int64_t(0)) + w,
                          &out.at(b, ch, y, int64_t(0)));
    return out;
}

// -------------------------------------------------- dihedral transforms (HW)

// Counter-clockwise quarter turns on the spatial plane.
template <typename T>
Tensor<T> rot90_hw(const Tensor<T>& x, int64_t quarter_turns) {
    if (x.rank() != 4)
        throw ShapeError(cat("rot90_hw: expected NCHW, got ", shape_str(x.shape())));
    const int64_t q = ((quarter_turns % 4) + 4) % 4;
    if (q == 0) return x;
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t oh = (q % 2 == 0) ? h : w;
    const int64_t ow = (q % 2 == 0) ? w : h;
    Tensor<T> out({n, c, oh, ow});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t xx = 0; xx < w; ++xx) {
                    int64_t oy = 0, ox = 0;
                    switch (q) {
                        case 1: oy = w - 1 - xx; ox = y; break;
                        case 2: oy = h - 1 - y; ox = w - 1 - xx; break;
                        case 3: oy = xx; ox = h - 1 - y; break;
                    }
                    out.at(b, ch, oy, ox) = x.at(b, ch, y, xx);
                }
    return out;
}

template <typename T>
Tensor<T> flip_w(const Tensor<T>& x) {
    if (x.rank() != 4)
        throw ShapeError(cat("flip_w: expected NCHW, got ", shape_str(x.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> out(x.shape());
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t xx = 0; xx < w; ++xx)
                    out.at(b, ch, y, w - 1 - xx) = x.at(b, ch, y, xx);
    return out;
}

} // namespace cpat::ops
