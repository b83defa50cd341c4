#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "cpat/instrument.hpp"
#include "cpat/tensor.hpp"

// 2-D DFT over the spatial plane of NCHW tensors. Forward is unnormalized
// (DC bin equals the pixel sum); the inverse divides by H*W. Power-of-two
// lengths run radix-2 Cooley-Tukey, everything else goes through Bluestein's
// chirp-z algorithm, so any H, W >= 1 is supported.

namespace cpat::fft {

namespace detail {

inline bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

inline int64_t next_pow2(int64_t n) {
    int64_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Twiddle and chirp tables are computed in double regardless of the scalar
// type in flight. Cached per length.
struct PlanTables {
    std::vector<std::complex<double>> twiddle_fwd; // pow2: stages concatenated
    std::vector<std::complex<double>> chirp;       // bluestein: exp(-i pi k^2 / n)
    std::vector<std::complex<double>> chirp_fft;   // fft of padded conjugate chirp
    int64_t conv_len = 0;
};

inline void pow2_fft(std::complex<double>* a, int64_t n, bool inverse) {
    // bit-reversal permutation
    for (int64_t i = 1, j = 0; i < n; ++i) {
        int64_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int64_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (int64_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int64_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline const PlanTables& bluestein_tables(int64_t n) {
    thread_local std::unordered_map<int64_t, PlanTables> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    PlanTables t;
    t.conv_len = next_pow2(2 * n - 1);
    t.chirp.resize(n);
    for (int64_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the argument bounded for large k
        const int64_t k2 = (k * k) % (2 * n);
        const double ang = -M_PI * static_cast<double>(k2) / static_cast<double>(n);
        t.chirp[k] = {std::cos(ang), std::sin(ang)};
    }
    std::vector<std::complex<double>> b(t.conv_len, {0.0, 0.0});
    b[0] = std::conj(t.chirp[0]);
    for (int64_t k = 1; k < n; ++k) {
        b[k] = std::conj(t.chirp[k]);
        b[t.conv_len - k] = std::conj(t.chirp[k]);
    }
    pow2_fft(b.data(), t.conv_len, false);
    t.chirp_fft = std::move(b);
    return cache.emplace(n, std::move(t)).first->second;
}

// In-place forward/inverse DFT of length n with stride between elements.
inline void dft_strided(std::complex<double>* data, int64_t n, int64_t stride, bool inverse,
                        std::vector<std::complex<double>>& scratch) {
    if (n == 1) return;
    scratch.resize(static_cast<size_t>(is_pow2(n) ? n : bluestein_tables(n).conv_len));
    if (is_pow2(n)) {
        for (int64_t i = 0; i < n; ++i) scratch[i] = data[i * stride];
        pow2_fft(scratch.data(), n, inverse);
        for (int64_t i = 0; i < n; ++i) data[i * stride] = scratch[i];
        return;
    }
    const PlanTables& t = bluestein_tables(n);
    const int64_t m = t.conv_len;
    std::fill(scratch.begin(), scratch.begin() + m, std::complex<double>(0.0, 0.0));
    if (inverse) {
        for (int64_t i = 0; i < n; ++i) scratch[i] = std::conj(data[i * stride]) * t.chirp[i];
    } else {
        for (int64_t i = 0; i < n; ++i) scratch[i] = data[i * stride] * t.chirp[i];
    }
    pow2_fft(scratch.data(), m, false);
    for (int64_t i = 0; i < m; ++i) scratch[i] *= t.chirp_fft[i];
    pow2_fft(scratch.data(), m, true);
    const double inv_m = 1.0 / static_cast<double>(m);
    if (inverse) {
        for (int64_t i = 0; i < n; ++i)
            data[i * stride] = std::conj(scratch[i] * inv_m * t.chirp[i]);
    } else {
        for (int64_t i = 0; i < n; ++i) data[i * stride] = scratch[i] * inv_m * t.chirp[i];
    }
}

// One H x W plane, in place.
inline void dft2_plane(std::complex<double>* plane, int64_t h, int64_t w, bool inverse) {
    std::vector<std::complex<double>> scratch;
    for (int64_t y = 0; y < h; ++y) dft_strided(plane + y * w, w, 1, inverse, scratch);
    for (int64_t x = 0; x < w; ++x) dft_strided(plane + x, h, w, inverse, scratch);
}

} // namespace detail

template <typename T>
ComplexTensor<T> fft2(const Tensor<T>& x) {
    if (x.rank() != 4)
        throw ShapeError(cat("fft2: expected NCHW, got ", shape_str(x.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> re(x.shape()), im(x.shape());
    std::vector<std::complex<double>> plane(static_cast<size_t>(h * w));
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (b * c + ch) * h * w;
            for (int64_t i = 0; i < h * w; ++i)
                plane[i] = {static_cast<double>(x[base + i]), 0.0};
            detail::dft2_plane(plane.data(), h, w, false);
            for (int64_t i = 0; i < h * w; ++i) {
                re[base + i] = static_cast<T>(plane[i].real());
                im[base + i] = static_cast<T>(plane[i].imag());
            }
        }
    }
    CounterScope::add_fft_call();
    return {std::move(re), std::move(im)};
}

// Full complex inverse (1/(HW) normalization); building block for ifft2.
template <typename T>
ComplexTensor<T> ifft2_complex(const ComplexTensor<T>& f) {
    const Tensor<T>& xr = f.real;
    if (xr.rank() != 4)
        throw ShapeError(cat("ifft2: expected NCHW, got ", shape_str(xr.shape())));
    const int64_t n = xr.dim(0), c = xr.dim(1), h = xr.dim(2), w = xr.dim(3);
    const double norm = 1.0 / static_cast<double>(h * w);
    Tensor<T> re(xr.shape()), im(xr.shape());
    std::vector<std::complex<double>> plane(static_cast<size_t>(h * w));
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (b * c + ch) * h * w;
            for (int64_t i = 0; i < h * w; ++i)
                plane[i] = {static_cast<double>(f.real[base + i]),
                            static_cast<double>(f.imag[base + i])};
            detail::dft2_plane(plane.data(), h, w, true);
            for (int64_t i = 0; i < h * w; ++i) {
                re[base + i] = static_cast<T>(plane[i].real() * norm);
                im[base + i] = static_cast<T>(plane[i].imag() * norm);
            }
        }
    }
    CounterScope::add_fft_call();
    return {std::move(re), std::move(im)};
}

// Real part of the inverse transform. For spectra that lost Hermitian
// symmetry the imaginary remainder is reported through imag_residue.
template <typename T>
Tensor<T> ifft2(const ComplexTensor<T>& f, T* imag_residue = nullptr) {
    ComplexTensor<T> z = ifft2_complex(f);
    if (imag_residue) {
        T m = 0;
        for (int64_t i = 0; i < z.imag.numel(); ++i) m = std::max(m, std::abs(z.imag[i]));
        *imag_residue = m;
    }
    return z.real;
}

} // namespace cpat::fft
