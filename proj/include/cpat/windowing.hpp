#pragma once

#include <cstdint>

#include "cpat/autograd.hpp"
#include "cpat/ops.hpp"
#include "cpat/tensor.hpp"

// Window geometry for the three attention branches plus the overlapping
// unfold used by cross-window attention. Partition/merge and shift/unshift
// are exact bijections; their adjoints are each other, which is what the
// tape wrappers rely on.

namespace cpat {

enum class WindowKind { Squared, VerticalEnhanced, HorizontalEnhanced };

inline const char* window_kind_name(WindowKind k) {
    switch (k) {
        case WindowKind::Squared: return "squared";
        case WindowKind::VerticalEnhanced: return "vertical-enhanced";
        case WindowKind::HorizontalEnhanced: return "horizontal-enhanced";
    }
    return "?";
}

// Geometry of one branch's windows. Shifts are a cyclic roll applied before
// partitioning: shift_dx <= 0 moves content leftward, shift_dy >= 0 downward.
struct WindowSpec {
    int64_t win_h = 0;
    int64_t win_w = 0;
    int64_t shift_dx = 0;
    int64_t shift_dy = 0;
    WindowKind kind = WindowKind::Squared;

    static WindowSpec squared(int64_t ws, bool shifted = false) {
        check_ws(ws, shifted);
        // squared windows roll along both axes (no enhanced direction to keep)
        return {ws, ws, shifted ? -ws / 2 : 0, shifted ? ws / 2 : 0, WindowKind::Squared};
    }

    static WindowSpec vertical_enhanced(int64_t full_h, int64_t ws, bool shifted = false) {
        check_ws(ws, shifted);
        if (full_h < 1) throw ShapeError(cat("window spec: H = ", full_h));
        return {full_h, ws, shifted ? -ws / 2 : 0, 0, WindowKind::VerticalEnhanced};
    }

    static WindowSpec horizontal_enhanced(int64_t full_w, int64_t ws, bool shifted = false) {
        check_ws(ws, shifted);
        if (full_w < 1) throw ShapeError(cat("window spec: W = ", full_w));
        return {ws, full_w, 0, shifted ? ws / 2 : 0, WindowKind::HorizontalEnhanced};
    }

    bool shifted() const { return shift_dx != 0 || shift_dy != 0; }
    int64_t tokens() const { return win_h * win_w; }

private:
    static void check_ws(int64_t ws, bool shifted) {
        if (ws < 1) throw ShapeError(cat("window spec: window size ", ws));
        if (shifted && ws % 2 != 0)
            throw ShapeError(cat("window spec: shift needs even window size, got ", ws));
    }
};

// Overlapped-window geometry: M x M query windows, M_o x M_o key/value
// windows with M_o = floor((1 + alpha) * M).
struct OverlapSpec {
    int64_t m = 0;
    double alpha = 0.0;
    int64_t m_o = 0;

    OverlapSpec(int64_t m_, double alpha_) : m(m_), alpha(alpha_) {
        if (m < 1) throw ShapeError(cat("overlap spec: M = ", m));
        if (alpha < 0.0) throw ShapeError(cat("overlap spec: alpha = ", alpha));
        m_o = static_cast<int64_t>(std::floor((1.0 + alpha) * static_cast<double>(m)));
        if (alpha > 0.0 && m_o <= m)
            throw ShapeError(cat("overlap spec: M_o = ", m_o, " not larger than M = ", m));
        if ((m_o - m) % 2 != 0)
            throw ShapeError(cat("overlap spec: halo M_o - M = ", m_o - m, " must be even"));
    }

    int64_t halo() const { return (m_o - m) / 2; }
};

namespace win {

inline int64_t window_count(int64_t h, int64_t w, const WindowSpec& spec) {
    if (spec.win_h < 1 || spec.win_w < 1)
        throw ShapeError(cat("partition: zero-sized window ", spec.win_h, "x", spec.win_w));
    if (h % spec.win_h != 0 || w % spec.win_w != 0)
        throw ShapeError(cat("partition: map ", h, "x", w, " not divisible by ", spec.win_h,
                             "x", spec.win_w, " windows"));
    return (h / spec.win_h) * (w / spec.win_w);
}

// [N,C,H,W] -> [N*nw, C, win_h, win_w], windows ordered row-major.
template <typename T>
Tensor<T> partition(const Tensor<T>& x, const WindowSpec& spec) {
    if (x.rank() != 4)
        throw ShapeError(cat("partition: expected NCHW, got ", shape_str(x.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t nw = window_count(h, w, spec);
    const int64_t wh = spec.win_h, ww = spec.win_w;
    const int64_t cols = w / ww;
    Tensor<T> out({n * nw, c, wh, ww});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t wi = 0; wi < nw; ++wi) {
            const int64_t wy = (wi / cols) * wh;
            const int64_t wx = (wi % cols) * ww;
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < wh; ++y)
                    std::copy(&x.at(b, ch, wy + y, wx), &x.at(b, ch, wy + y, wx) + ww,
                              &out.at(b * nw + wi, ch, y, int64_t(0)));
        }
    return out;
}

// Exact inverse of partition for the same spec and target H, W.
template <typename T>
Tensor<T> merge(const Tensor<T>& windows, const WindowSpec& spec, int64_t h, int64_t w) {
    if (windows.rank() != 4)
        throw ShapeError(cat("merge: expected window stack, got ", shape_str(windows.shape())));
    const int64_t nw = window_count(h, w, spec);
    if (windows.dim(0) % nw != 0)
        throw ShapeError(cat("merge: ", windows.dim(0), " windows not a multiple of ", nw,
                             " per image"));
    if (windows.dim(2) != spec.win_h || windows.dim(3) != spec.win_w)
        throw ShapeError(cat("merge: window shape ", shape_str(windows.shape()),
                             " does not match spec ", spec.win_h, "x", spec.win_w));
    const int64_t n = windows.dim(0) / nw;
    const int64_t c = windows.dim(1);
    const int64_t wh = spec.win_h, ww = spec.win_w;
    const int64_t cols = w / ww;
    Tensor<T> out({n, c, h, w});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t wi = 0; wi < nw; ++wi) {
            const int64_t wy = (wi / cols) * wh;
            const int64_t wx = (wi % cols) * ww;
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < wh; ++y)
                    std::copy(&windows.at(b * nw + wi, ch, y, int64_t(0)),
                              &windows.at(b * nw + wi, ch, y, int64_t(0)) + ww,
                              &out.at(b, ch, wy + y, wx));
        }
    return out;
}

// Cyclic roll by the spec's shift offsets; out(y,x) = in(y-dy mod H, x-dx mod W).
template <typename T>
Tensor<T> roll(const Tensor<T>& x, int64_t dy, int64_t dx) {
    if (x.rank() != 4)
        throw ShapeError(cat("roll: expected NCHW, got ", shape_str(x.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (dy == 0 && dx == 0) return x;
    Tensor<T> out(x.shape());
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y) {
                const int64_t sy = ((y - dy) % h + h) % h;
                for (int64_t xx = 0; xx < w; ++xx) {
                    const int64_t sx = ((xx - dx) % w + w) % w;
                    out.at(b, ch, y, xx) = x.at(b, ch, sy, sx);
                }
            }
    return out;
}

template <typename T>
Tensor<T> shift(const Tensor<T>& x, const WindowSpec& spec) {
    return roll(x, spec.shift_dy, spec.shift_dx);
}

template <typename T>
Tensor<T> unshift(const Tensor<T>& x, const WindowSpec& spec) {
    return roll(x, -spec.shift_dy, -spec.shift_dx);
}

// [N,C,H,W] -> [N*(HW/M^2), C, M_o, M_o]; window i covers the i-th
// non-overlapping M x M window plus a halo of (M_o-M)/2 on each side,
// zero-padded where the halo leaves the image.
template <typename T>
Tensor<T> unfold_overlapping(const Tensor<T>& x, const OverlapSpec& os) {
    if (x.rank() != 4)
        throw ShapeError(cat("unfold_overlapping: expected NCHW, got ", shape_str(x.shape())));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % os.m != 0 || w % os.m != 0)
        throw ShapeError(cat("unfold_overlapping: map ", h, "x", w, " not divisible by M = ",
                             os.m));
    const int64_t nw = (h / os.m) * (w / os.m);
    const int64_t cols = w / os.m;
    const int64_t halo = os.halo();
    Tensor<T> out({n * nw, c, os.m_o, os.m_o});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t wi = 0; wi < nw; ++wi) {
            const int64_t wy = (wi / cols) * os.m - halo;
            const int64_t wx = (wi % cols) * os.m - halo;
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < os.m_o; ++y) {
                    const int64_t sy = wy + y;
                    if (sy < 0 || sy >= h) continue; // stays zero
                    for (int64_t xx = 0; xx < os.m_o; ++xx) {
                        const int64_t sx = wx + xx;
                        if (sx < 0 || sx >= w) continue;
                        out.at(b * nw + wi, ch, y, xx) = x.at(b, ch, sy, sx);
                    }
                }
        }
    return out;
}

// Adjoint of unfold_overlapping: scatter-adds window gradients back.
template <typename T>
Tensor<T> fold_overlapping_add(const Tensor<T>& windows, const OverlapSpec& os, int64_t n,
                               int64_t h, int64_t w) {
    const int64_t nw = (h / os.m) * (w / os.m);
    const int64_t cols = w / os.m;
    const int64_t halo = os.halo();
    const int64_t c = windows.dim(1);
    Tensor<T> out({n, c, h, w});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t wi = 0; wi < nw; ++wi) {
            const int64_t wy = (wi / cols) * os.m - halo;
            const int64_t wx = (wi % cols) * os.m - halo;
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < os.m_o; ++y) {
                    const int64_t sy = wy + y;
                    if (sy < 0 || sy >= h) continue;
                    for (int64_t xx = 0; xx < os.m_o; ++xx) {
                        const int64_t sx = wx + xx;
                        if (sx < 0 || sx >= w) continue;
                        out.at(b, ch, sy, sx) += windows.at(b * nw + wi, ch, y, xx);
                    }
                }
        }
    return out;
}

} // namespace win

// Differentiable wrappers; each direction's adjoint is its inverse.
namespace ag {

template <typename T>
Var<T> partition(Var<T> x, const WindowSpec& spec) {
    Tape<T>& tp = *x.tape;
    const Tensor<T>& xv = tp.value(x);
    const int64_t h = xv.dim(2), w = xv.dim(3);
    Tensor<T> out = win::partition(xv, spec);
    const bool rg = tp.requires_grad(x);
    auto back = [x, spec, h, w](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(x.id, win::merge(g, spec, h, w));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> merge(Var<T> windows, const WindowSpec& spec, int64_t h, int64_t w) {
    Tape<T>& tp = *windows.tape;
    Tensor<T> out = win::merge(tp.value(windows), spec, h, w);
    const bool rg = tp.requires_grad(windows);
    auto back = [windows, spec](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(windows.id, win::partition(g, spec));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> shift(Var<T> x, const WindowSpec& spec) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = win::shift(tp.value(x), spec);
    const bool rg = tp.requires_grad(x);
    auto back = [x, spec](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(x.id, win::unshift(g, spec));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> unshift(Var<T> x, const WindowSpec& spec) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = win::unshift(tp.value(x), spec);
    const bool rg = tp.requires_grad(x);
    auto back = [x, spec](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(x.id, win::shift(g, spec));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> unfold_overlapping(Var<T> x, const OverlapSpec& os) {
    Tape<T>& tp = *x.tape;
    const Tensor<T>& xv = tp.value(x);
    const int64_t n = xv.dim(0), h = xv.dim(2), w = xv.dim(3);
    Tensor<T> out = win::unfold_overlapping(xv, os);
    const bool rg = tp.requires_grad(x);
    auto back = [x, os, n, h, w](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(x.id, win::fold_overlapping_add(g, os, n, h, w));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

} // namespace ag
} // namespace cpat
