#pragma once

#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "cpat/fft.hpp"
#include "cpat/ops.hpp"
#include "cpat/tensor.hpp"

// Reverse-mode differentiation on an append-only tape. Every op records its
// output value plus a closure that routes the incoming gradient to the op's
// inputs; node ids are already a topological order, so backward is a single
// reverse sweep. Tensors on the tape are immutable; gradient buffers are
// owned by the tape and accumulated in place.

namespace cpat::ag {

template <typename T>
class Tape;

template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int32_t id = -1;
    bool defined() const { return tape != nullptr; }
};

template <typename T>
class Tape {
public:
    using BackFn = std::function<void(Tape&, const Tensor<T>&)>;

    Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
        return {this, push(std::move(value), requires_grad, nullptr)};
    }

    const Tensor<T>& value(Var<T> v) const { return nodes_[checked(v)].value; }
    bool requires_grad(Var<T> v) const { return nodes_[checked(v)].requires_grad; }

    int32_t push(Tensor<T> value, bool requires_grad, BackFn back) {
        nodes_.push_back({std::move(value), std::move(back), requires_grad});
        return static_cast<int32_t>(nodes_.size()) - 1;
    }

    void accumulate(int32_t id, const Tensor<T>& g) {
        Node& node = nodes_[static_cast<size_t>(id)];
        if (!node.requires_grad) return;
        Tensor<T>& slot = grads_[static_cast<size_t>(id)];
        if (!slot.defined()) {
            Tensor<T> copy(g.shape());
            std::copy(g.data(), g.data() + g.numel(), copy.data());
            slot = std::move(copy);
        } else {
            T* p = slot.data();
            for (int64_t i = 0; i < g.numel(); ++i) p[i] += g[i];
        }
    }

    // Reverse sweep from a scalar loss. Gradients from a previous sweep are
    // discarded.
    void backward(Var<T> loss) {
        const int32_t root = checked(loss);
        if (nodes_[root].value.numel() != 1)
            throw NumericError(cat("backward: loss must be scalar, got shape ",
                                   shape_str(nodes_[root].value.shape())));
        grads_.assign(nodes_.size(), Tensor<T>());
        if (!nodes_[root].requires_grad) return;
        accumulate(root, Tensor<T>::full({1}, T(1)));
        for (int32_t id = root; id >= 0; --id) {
            Node& node = nodes_[static_cast<size_t>(id)];
            if (!node.back || !grads_[static_cast<size_t>(id)].defined()) continue;
            node.back(*this, grads_[static_cast<size_t>(id)]);
        }
    }

    // Gradient of a leaf/op output after backward(); exactly zero if the node
    // did not participate in the loss.
    Tensor<T> grad(Var<T> v) const {
        const int32_t id = checked(v);
        if (static_cast<size_t>(id) < grads_.size() && grads_[static_cast<size_t>(id)].defined())
            return grads_[static_cast<size_t>(id)];
        return Tensor<T>(nodes_[static_cast<size_t>(id)].value.shape());
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        BackFn back;
        bool requires_grad;
    };

    int32_t checked(Var<T> v) const {
        if (v.tape != this || v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
            throw Error("tape: variable does not belong to this tape");
        return v.id;
    }

    std::deque<Node> nodes_;
    std::vector<Tensor<T>> grads_;
};

namespace detail {

template <typename T, typename... Vars>
bool any_requires(Tape<T>& tape, Vars... vs) {
    return (tape.requires_grad(vs) || ...);
}

} // namespace detail

// ----------------------------------------------------------------- pointwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = ops::add(tp.value(a), tp.value(b));
    const bool rg = detail::any_requires(tp, a, b);
    auto back = [a, b](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(a.id, g);
        t.accumulate(b.id, g);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = ops::sub(tp.value(a), tp.value(b));
    const bool rg = detail::any_requires(tp, a, b);
    auto back = [a, b](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(a.id, g);
        t.accumulate(b.id, ops::scale(g, T(-1)));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = ops::mul(tp.value(a), tp.value(b));
    const bool rg = detail::any_requires(tp, a, b);
    auto back = [a, b](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(a.id, ops::mul(g, t.value(b)));
        t.accumulate(b.id, ops::mul(g, t.value(a)));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = ops::scale(tp.value(a), s);
    const bool rg = tp.requires_grad(a);
    auto back = [a, s](Tape<T>& t, const Tensor<T>& g) { t.accumulate(a.id, ops::scale(g, s)); };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> abs(Var<T> a) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = ops::abs(tp.value(a));
    const bool rg = tp.requires_grad(a);
    auto back = [a](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(a);
        Tensor<T> gx(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i)
            gx[i] = x[i] > T(0) ? g[i] : (x[i] < T(0) ? -g[i] : T(0));
        t.accumulate(a.id, gx);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum_all(Var<T> a) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = Tensor<T>::full({1}, ops::sum_all(tp.value(a)));
    const bool rg = tp.requires_grad(a);
    auto back = [a](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(a.id, Tensor<T>::full(t.value(a).shape(), g[0]));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> mean_all(Var<T> a) {
    Tape<T>& tp = *a.tape;
    const int64_t n = tp.value(a).numel();
    Tensor<T> out = Tensor<T>::full({1}, ops::mean_all(tp.value(a)));
    const bool rg = tp.requires_grad(a);
    auto back = [a, n](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(a.id, Tensor<T>::full(t.value(a).shape(), g[0] / static_cast<T>(n)));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

// ------------------------------------------------------------------- linear

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = ops::matmul(tp.value(a), tp.value(b));
    const bool rg = detail::any_requires(tp, a, b);
    auto back = [a, b](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(a);
        const Tensor<T>& bv = t.value(b);
        const int64_t k = av.dim(av.rank() - 1);
        const int64_t n = bv.dim(bv.rank() - 1);
        if (bv.rank() == 2) {
            // grad_a = g . b^T  (batched x 2-D)
            t.accumulate(a.id, ops::matmul(g, ops::permute(bv, {1, 0})));
            // grad_b = a_flat^T . g_flat, summing over every leading dim
            const int64_t rows = av.numel() / k;
            Tensor<T> a2 = av.reshape({rows, k});
            Tensor<T> g2 = g.reshape({rows, n});
            t.accumulate(b.id, ops::matmul(ops::permute(a2, {1, 0}), g2));
        } else {
            std::vector<int64_t> perm(av.rank());
            for (int64_t d = 0; d < av.rank(); ++d) perm[d] = d;
            std::swap(perm[av.rank() - 1], perm[av.rank() - 2]);
            t.accumulate(a.id, ops::matmul(g, ops::permute(bv, perm)));
            t.accumulate(b.id, ops::matmul(ops::permute(av, perm), g));
        }
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> add_bias_last(Var<T> x, Var<T> bias) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = ops::add_bias_last(tp.value(x), tp.value(bias));
    const bool rg = detail::any_requires(tp, x, bias);
    auto back = [x, bias](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(x.id, g);
        const int64_t c = t.value(bias).dim(0);
        const int64_t rows = g.numel() / c;
        Tensor<T> gb({c});
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
        t.accumulate(bias.id, gb);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

// x . w + b over the last dimension
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
    return add_bias_last(matmul(x, w), b);
}

// ------------------------------------------------------- softmax, layer norm

template <typename T>
Var<T> softmax_last(Var<T> x) {
    Tape<T>& tp = *x.tape;
    Tensor<T> y = ops::softmax(tp.value(x), -1);
    const bool rg = tp.requires_grad(x);
    const Tensor<T> ysaved = y; // shares the immutable buffer
    // gx_i = y_i * (g_i - sum_j g_j y_j), rows over the last dim
    auto back = [x, ysaved](Tape<T>& t, const Tensor<T>& g) {
        const int64_t c = ysaved.dim(ysaved.rank() - 1);
        const int64_t rows = ysaved.numel() / c;
        Tensor<T> gx(ysaved.shape());
        for (int64_t r = 0; r < rows; ++r) {
            T dot = 0;
            for (int64_t j = 0; j < c; ++j) dot += g[r * c + j] * ysaved[r * c + j];
            for (int64_t j = 0; j < c; ++j)
                gx[r * c + j] = ysaved[r * c + j] * (g[r * c + j] - dot);
        }
        t.accumulate(x.id, gx);
    };
    return {&tp, tp.push(std::move(y), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = static_cast<T>(1e-5)) {
    Tape<T>& tp = *x.tape;
    const Tensor<T>& xv = tp.value(x);
    const Tensor<T>& gv = tp.value(gamma);
    Tensor<T> y = ops::layer_norm(xv, gv, tp.value(beta), eps);
    const bool rg = detail::any_requires(tp, x, gamma, beta);
    if (!rg) return {&tp, tp.push(std::move(y), false, nullptr)};

    // save normalized activations and inverse stddev for the backward pass
    const int64_t c = xv.dim(xv.rank() - 1);
    const int64_t rows = xv.numel() / c;
    Tensor<T> xhat(xv.shape());
    Tensor<T> inv_std({rows});
    for (int64_t r = 0; r < rows; ++r) {
        T mean = 0;
        for (int64_t j = 0; j < c; ++j) mean += xv[r * c + j];
        mean /= static_cast<T>(c);
        T var = 0;
        for (int64_t j = 0; j < c; ++j) {
            const T d = xv[r * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        for (int64_t j = 0; j < c; ++j) xhat[r * c + j] = (xv[r * c + j] - mean) * inv_std[r];
    }

    auto back = [x, gamma, beta, xhat, inv_std, c, rows](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& gv2 = t.value(gamma);
        Tensor<T> gx(xhat.shape());
        Tensor<T> ggamma({c});
        Tensor<T> gbeta({c});
        for (int64_t r = 0; r < rows; ++r) {
            T mean_gy = 0, mean_gyx = 0;
            for (int64_t j = 0; j < c; ++j) {
                const T gy = g[r * c + j] * gv2[j];
                mean_gy += gy;
                mean_gyx += gy * xhat[r * c + j];
            }
            mean_gy /= static_cast<T>(c);
            mean_gyx /= static_cast<T>(c);
            for (int64_t j = 0; j < c; ++j) {
                const T gy = g[r * c + j] * gv2[j];
                gx[r * c + j] = (gy - mean_gy - xhat[r * c + j] * mean_gyx) * inv_std[r];
                ggamma[j] += g[r * c + j] * xhat[r * c + j];
                gbeta[j] += g[r * c + j];
            }
        }
        t.accumulate(x.id, gx);
        t.accumulate(gamma.id, ggamma);
        t.accumulate(beta.id, gbeta);
    };
    return {&tp, tp.push(std::move(y), true, typename Tape<T>::BackFn(back))};
}

// -------------------------------------------------------------- convolutions

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> k, Var<T> bias, int64_t stride = 1, int64_t pad = -1) {
    Tape<T>& tp = *x.tape;
    const Tensor<T>& bv = tp.value(bias);
    Tensor<T> out = ops::conv2d(tp.value(x), tp.value(k), &bv, stride, pad);
    const bool rg = detail::any_requires(tp, x, k, bias);
    const int64_t kh = tp.value(k).dim(2);
    if (pad < 0) pad = kh / 2;
    auto back = [x, k, bias, stride, pad](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& kv = t.value(k);
        const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        const int64_t o = kv.dim(0), kh2 = kv.dim(2), kw2 = kv.dim(3);
        const int64_t oh = g.dim(2), ow = g.dim(3);
        Tensor<T> gx(xv.shape());
        Tensor<T> gk(kv.shape());
        Tensor<T> gb({o});
        for (int64_t b = 0; b < n; ++b)
            for (int64_t oc = 0; oc < o; ++oc)
                for (int64_t y = 0; y < oh; ++y)
                    for (int64_t xx = 0; xx < ow; ++xx) {
                        const T gv = g.at(b, oc, y, xx);
                        gb[oc] += gv;
                        for (int64_t ic = 0; ic < c; ++ic)
                            for (int64_t ky = 0; ky < kh2; ++ky) {
                                const int64_t iy = y * stride + ky - pad;
                                if (iy < 0 || iy >= h) continue;
                                for (int64_t kx = 0; kx < kw2; ++kx) {
                                    const int64_t ix = xx * stride + kx - pad;
                                    if (ix < 0 || ix >= w) continue;
                                    gx.at(b, ic, iy, ix) += gv * kv.at(oc, ic, ky, kx);
                                    gk.at(oc, ic, ky, kx) += gv * xv.at(b, ic, iy, ix);
                                }
                            }
                    }
        t.accumulate(x.id, gx);
        t.accumulate(k.id, gk);
        t.accumulate(bias.id, gb);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> depthwise_conv2d(Var<T> x, Var<T> k, Var<T> bias, int64_t pad = -1) {
    Tape<T>& tp = *x.tape;
    const Tensor<T>& bv = tp.value(bias);
    Tensor<T> out = ops::depthwise_conv2d(tp.value(x), tp.value(k), &bv, pad);
    const bool rg = detail::any_requires(tp, x, k, bias);
    const int64_t kh = tp.value(k).dim(2);
    if (pad < 0) pad = kh / 2;
    auto back = [x, k, bias, pad](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& kv = t.value(k);
        const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        const int64_t kh2 = kv.dim(2), kw2 = kv.dim(3);
        Tensor<T> gx(xv.shape());
        Tensor<T> gk(kv.shape());
        Tensor<T> gb({c});
        for (int64_t b = 0; b < n; ++b)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t xx = 0; xx < w; ++xx) {
                        const T gv = g.at(b, ch, y, xx);
                        gb[ch] += gv;
                        for (int64_t ky = 0; ky < kh2; ++ky) {
                            const int64_t iy = y + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t kx = 0; kx < kw2; ++kx) {
                                const int64_t ix = xx + kx - pad;
                                if (ix < 0 || ix >= w) continue;
                                gx.at(b, ch, iy, ix) += gv * kv.at(ch, int64_t(0), ky, kx);
                                gk.at(ch, int64_t(0), ky, kx) += gv * xv.at(b, ch, iy, ix);
                            }
                        }
                    }
        t.accumulate(x.id, gx);
        t.accumulate(k.id, gk);
        t.accumulate(bias.id, gb);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

// -------------------------------------------------------------- activations

template <typename T>
Var<T> gelu(Var<T> x) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = ops::gelu(tp.value(x));
    const bool rg = tp.requires_grad(x);
    auto back = [x](Tape<T>& t, const Tensor<T>& g) {
        constexpr T kA = static_cast<T>(0.7978845608028654);
        constexpr T kB = static_cast<T>(0.044715);
        const Tensor<T>& xv = t.value(x);
        Tensor<T> gx(xv.shape());
        for (int64_t i = 0; i < xv.numel(); ++i) {
            const T v = xv[i];
            const T u = kA * (v + kB * v * v * v);
            const T th = std::tanh(u);
            const T du = kA * (T(1) + T(3) * kB * v * v);
            gx[i] = g[i] * (static_cast<T>(0.5) * (T(1) + th) +
                            static_cast<T>(0.5) * v * (T(1) - th * th) * du);
        }
        t.accumulate(x.id, gx);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope = static_cast<T>(0.2)) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = ops::leaky_relu(tp.value(x), slope);
    const bool rg = tp.requires_grad(x);
    auto back = [x, slope](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(x);
        Tensor<T> gx(xv.shape());
        for (int64_t i = 0; i < xv.numel(); ++i) gx[i] = xv[i] >= T(0) ? g[i] : slope * g[i];
        t.accumulate(x.id, gx);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

// ------------------------------------------------------------------- layout

template <typename T>
Var<T> reshape(Var<T> x, std::vector<int64_t> shape) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = tp.value(x).reshape(shape);
    const bool rg = tp.requires_grad(x);
    auto back = [x](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(x.id, g.reshape(t.value(x).shape()));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> permute(Var<T> x, std::vector<int64_t> axes) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = ops::permute(tp.value(x), axes);
    const bool rg = tp.requires_grad(x);
    auto back = [x, axes](Tape<T>& t, const Tensor<T>& g) {
        std::vector<int64_t> inv(axes.size());
        for (size_t d = 0; d < axes.size(); ++d) inv[axes[d]] = static_cast<int64_t>(d);
        t.accumulate(x.id, ops::permute(g, inv));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> pixel_shuffle(Var<T> x, int64_t r) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = ops::pixel_shuffle(tp.value(x), r);
    const bool rg = tp.requires_grad(x);
    auto back = [x, r](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(x.id, ops::pixel_unshuffle(g, r));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
    Tape<T>& tp = *parts.at(0).tape;
    std::vector<Tensor<T>> vals;
    vals.reserve(parts.size());
    bool rg = false;
    for (const Var<T>& p : parts) {
        vals.push_back(tp.value(p));
        rg = rg || tp.requires_grad(p);
    }
    Tensor<T> out = ops::concat_channels(vals);
    auto back = [parts](Tape<T>& t, const Tensor<T>& g) {
        int64_t off = 0;
        for (const Var<T>& p : parts) {
            const int64_t pc = t.value(p).dim(1);
            t.accumulate(p.id, ops::slice_channels(g, off, off + pc));
            off += pc;
        }
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> slice_channels(Var<T> x, int64_t c_begin, int64_t c_end) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = ops::slice_channels(tp.value(x), c_begin, c_end);
    const bool rg = tp.requires_grad(x);
    auto back = [x, c_begin, c_end](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(x);
        Tensor<T> gx(xv.shape());
        const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
        const int64_t cs = c_end - c_begin;
        for (int64_t b = 0; b < n; ++b)
            std::copy(g.data() + b * cs * hw, g.data() + (b + 1) * cs * hw,
                      gx.data() + (b * c + c_begin) * hw);
        t.accumulate(x.id, gx);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> pad_reflect_hw(Var<T> x, int64_t pad_bottom, int64_t pad_right) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = ops::pad_reflect_hw(tp.value(x), pad_bottom, pad_right);
    const bool rg = tp.requires_grad(x);
    auto back = [x, pad_bottom, pad_right](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(x);
        const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        Tensor<T> gx(xv.shape());
        for (int64_t b = 0; b < n; ++b)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < h + pad_bottom; ++y) {
                    const int64_t sy = y < h ? y : 2 * h - 2 - y;
                    for (int64_t xx = 0; xx < w + pad_right; ++xx) {
                        const int64_t sx = xx < w ? xx : 2 * w - 2 - xx;
                        gx.at(b, ch, sy, sx) += g.at(b, ch, y, xx);
                    }
                }
        t.accumulate(x.id, gx);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

template <typename T>
Var<T> crop_hw(Var<T> x, int64_t h, int64_t w) {
    Tape<T>& tp = *x.tape;
    Tensor<T> out = ops::crop_hw(tp.value(x), h, w);
    const bool rg = tp.requires_grad(x);
    auto back = [x, h, w](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(x);
        Tensor<T> gx(xv.shape());
        const int64_t n = xv.dim(0), c = xv.dim(1);
        for (int64_t b = 0; b < n; ++b)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < h; ++y)
                    std::copy(&g.at(b, ch, y, int64_t(0)), &g.at(b, ch, y, int64_t(0)) + w,
                              &gx.at(b, ch, y, int64_t(0)));
        t.accumulate(x.id, gx);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

// ---------------------------------------------------------------- frequency

// [N,C,H,W] -> [N,2C,H,W]: real parts of the forward DFT in the first C
// channels, imaginary parts in the second C.
template <typename T>
Var<T> fft2_stack(Var<T> x) {
    Tape<T>& tp = *x.tape;
    const Tensor<T>& xv = tp.value(x);
    ComplexTensor<T> f = fft::fft2(xv);
    Tensor<T> out = ops::concat_channels<T>({f.real, f.imag});
    const bool rg = tp.requires_grad(x);
    auto back = [x](Tape<T>& t, const Tensor<T>& g) {
        // adjoint of x -> [Re Fx; Im Fx] is HW * Re(ifft2(a + i b))
        const int64_t c2 = g.dim(1);
        Tensor<T> a = ops::slice_channels(g, 0, c2 / 2);
        Tensor<T> b = ops::slice_channels(g, c2 / 2, c2);
        const T hw = static_cast<T>(g.dim(2) * g.dim(3));
        ComplexTensor<T> z = fft::ifft2_complex<T>({std::move(a), std::move(b)});
        t.accumulate(x.id, ops::scale(z.real, hw));
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

// [N,2C,H,W] -> [N,C,H,W]: inverse DFT of the stacked spectrum, real part.
template <typename T>
Var<T> ifft2_real_stack(Var<T> x) {
    Tape<T>& tp = *x.tape;
    const Tensor<T>& xv = tp.value(x);
    if (xv.dim(1) % 2 != 0)
        throw ShapeError(cat("ifft2_real_stack: odd channel count ", xv.dim(1)));
    const int64_t c2 = xv.dim(1);
    Tensor<T> p = ops::slice_channels(xv, 0, c2 / 2);
    Tensor<T> q = ops::slice_channels(xv, c2 / 2, c2);
    Tensor<T> out = fft::ifft2<T>({std::move(p), std::move(q)});
    const bool rg = tp.requires_grad(x);
    auto back = [x](Tape<T>& t, const Tensor<T>& g) {
        const T inv_hw = T(1) / static_cast<T>(g.dim(2) * g.dim(3));
        ComplexTensor<T> f = fft::fft2(g);
        Tensor<T> gs = ops::concat_channels<T>(
            {ops::scale(f.real, inv_hw), ops::scale(f.imag, inv_hw)});
        t.accumulate(x.id, gs);
    };
    return {&tp, tp.push(std::move(out), rg, rg ? typename Tape<T>::BackFn(back) : nullptr)};
}

} // namespace cpat::ag
