#pragma once

#include <cassert>
#include <functional>

#include "cpat/attention.hpp"
#include "cpat/autograd.hpp"
#include "cpat/fft.hpp"

// Spatial-Frequency Interaction Module. Two parallel branches over the same
// input: a local-convolution branch and an FFT branch that mixes the stacked
// real/imaginary spectrum with a learned pointwise transform. A 1x1 fusion
// brings 2C channels back to C. use_freq = false swaps the frequency-domain
// core for the identity, leaving the surrounding convolutions in place and
// executing zero FFTs.

namespace cpat {

template <typename T>
struct SfimVars {
    ag::Var<T> sp_conv1_w, sp_conv1_b;   // 1x1, C -> C
    ag::Var<T> sp_conv3a_w, sp_conv3a_b; // 3x3 on the first channel half
    ag::Var<T> sp_conv3b_w, sp_conv3b_b; // 3x3 on the second half
    ag::Var<T> fq_entry_w, fq_entry_b;   // 3x3, C -> C
    ag::Var<T> fq_pre_w, fq_pre_b;       // 3x3, C -> C, ahead of the FFT
    ag::Var<T> fq_spec_w, fq_spec_b;     // 1x1 over the stacked spectrum, 2C -> 2C
    ag::Var<T> fq_exit_w, fq_exit_b;     // 1x1, C -> C
    ag::Var<T> fuse_w, fuse_b;           // 1x1, 2C -> C
};

namespace sfim {

// Test/analysis hook: forward transform, arbitrary spectrum edit, inverse.
template <typename T>
Tensor<T> spectrum_filter(const Tensor<T>& x,
                          const std::function<void(ComplexTensor<T>&)>& edit) {
    ComplexTensor<T> f = fft::fft2(x);
    if (edit) edit(f);
    return fft::ifft2(f);
}

} // namespace sfim

namespace ag {

// fft -> ifft with no spectrum transform; identity up to roundtrip error.
// The Hermitian symmetry of the spectrum is untouched here, so the inverse
// must come back real; debug builds verify the imaginary residue.
template <typename T>
Var<T> freq_domain_identity(Var<T> x) {
    Var<T> stacked = fft2_stack(x);
    Var<T> out = ifft2_real_stack(stacked);
#ifndef NDEBUG
    {
        const Tensor<T>& xs = x.tape->value(stacked);
        const int64_t c2 = xs.dim(1);
        T residue = 0;
        ComplexTensor<T> z = fft::ifft2_complex<T>(
            {ops::slice_channels(xs, 0, c2 / 2), ops::slice_channels(xs, c2 / 2, c2)});
        for (int64_t i = 0; i < z.imag.numel(); ++i)
            residue = std::max(residue, std::abs(z.imag[i]));
        assert(residue < static_cast<T>(1e-5) && "freq_domain: symmetric spectrum came back complex");
    }
#endif
    return out;
}

// fft -> pointwise 1x1 transform + LeakyReLU on the stacked spectrum -> ifft,
// real part. The learned transform does not preserve Hermitian symmetry, so
// only the real part of the inverse is kept.
template <typename T>
Var<T> freq_domain(Var<T> x, Var<T> spec_w, Var<T> spec_b) {
    Var<T> stacked = fft2_stack(x);
    Var<T> mixed = leaky_relu(conv2d(stacked, spec_w, spec_b));
    return ifft2_real_stack(mixed);
}

// O_SB1 = LeakyReLU(conv1x1(x)); the two channel halves go through
// independent 3x3 convolutions, concatenated and added back onto O_SB1.
template <typename T>
Var<T> spatial_branch(Var<T> x, const SfimVars<T>& w) {
    Tape<T>& tp = *x.tape;
    const int64_t c = tp.value(x).dim(1);
    if (c % 2 != 0)
        throw ConfigError(cat("spatial_branch: channel count ", c, " must be even"));
    Var<T> sb1 = leaky_relu(conv2d(x, w.sp_conv1_w, w.sp_conv1_b));
    Var<T> lo = conv2d(slice_channels(sb1, 0, c / 2), w.sp_conv3a_w, w.sp_conv3a_b);
    Var<T> hi = conv2d(slice_channels(sb1, c / 2, c), w.sp_conv3b_w, w.sp_conv3b_b);
    return add(concat_channels<T>({lo, hi}), sb1);
}

// O_FB1 = LeakyReLU(conv3x3(x)); O_FB = conv1x1(FD(conv3x3(O_FB1)) + O_FB1)
template <typename T>
Var<T> freq_branch(Var<T> x, const SfimVars<T>& w, bool use_freq) {
    Var<T> fb1 = leaky_relu(conv2d(x, w.fq_entry_w, w.fq_entry_b));
    Var<T> pre = conv2d(fb1, w.fq_pre_w, w.fq_pre_b);
    Var<T> fd = use_freq ? freq_domain(pre, w.fq_spec_w, w.fq_spec_b) : pre;
    return conv2d(add(fd, fb1), w.fq_exit_w, w.fq_exit_b);
}

template <typename T>
Var<T> sfim_forward(Var<T> x, const SfimVars<T>& w, bool use_freq) {
    Var<T> sp = spatial_branch(x, w);
    Var<T> fq = freq_branch(x, w, use_freq);
    return conv2d(concat_channels<T>({sp, fq}), w.fuse_w, w.fuse_b);
}

} // namespace ag
} // namespace cpat
