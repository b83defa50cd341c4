#pragma once

#include <cmath>
#include <cstdint>

#include "cpat/autograd.hpp"
#include "cpat/windowing.hpp"

// Multi-head windowed self-attention, the three channel-partition branches
// (V-EWin / H-EWin / W-MSA), the transformer block combining them, and the
// overlapping cross-attention module.

namespace cpat {

template <typename T>
struct AttentionVars {
    ag::Var<T> wq, bq, wk, bk, wv, bv, wp, bp;
    int64_t heads = 1;
};

template <typename T>
struct BranchVars {
    AttentionVars<T> attn;
    ag::Var<T> cpe_w, cpe_b; // depthwise position embedding
};

template <typename T>
struct BlockVars {
    ag::Var<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    BranchVars<T> vewin, hewin, wmsa;
    ag::Var<T> dwconv_w, dwconv_b; // applied to the concatenated value maps
    ag::Var<T> mlp_fc1_w, mlp_fc1_b, mlp_fc2_w, mlp_fc2_b;
};

template <typename T>
struct OcamVars {
    ag::Var<T> ln_gamma, ln_beta;
    AttentionVars<T> attn;
};

struct BlockGeometry {
    int64_t ws = 8;
    bool enhanced = true; // false: all three branches use squared windows
    bool shifted = false;
};

namespace ag {

// NCHW -> [N, H*W, C] token layout and back.
template <typename T>
Var<T> to_tokens(Var<T> x) {
    const std::vector<int64_t> s = x.tape->value(x).shape();
    return reshape(permute(x, {0, 2, 3, 1}), {s[0], s[2] * s[3], s[1]});
}

template <typename T>
Var<T> from_tokens(Var<T> tokens, int64_t h, int64_t w) {
    const std::vector<int64_t> s = tokens.tape->value(tokens).shape();
    return permute(reshape(tokens, {s[0], h, w, s[2]}), {0, 3, 1, 2});
}

// Channel LayerNorm on an NCHW map (normalizes across C per position).
template <typename T>
Var<T> layer_norm_nchw(Var<T> x, Var<T> gamma, Var<T> beta) {
    const std::vector<int64_t> s = x.tape->value(x).shape();
    return from_tokens(layer_norm(to_tokens(x), gamma, beta), s[2], s[3]);
}

// split [B,T,C] into heads -> [B*N, T, D]
template <typename T>
Var<T> split_heads(Var<T> tokens, int64_t heads) {
    const std::vector<int64_t> s = tokens.tape->value(tokens).shape();
    const int64_t d = s[2] / heads;
    return reshape(permute(reshape(tokens, {s[0], s[1], heads, d}), {0, 2, 1, 3}),
                   {s[0] * heads, s[1], d});
}

template <typename T>
Var<T> join_heads(Var<T> split, int64_t heads) {
    const std::vector<int64_t> s = split.tape->value(split).shape();
    const int64_t b = s[0] / heads;
    return reshape(permute(reshape(split, {b, heads, s[1], s[2]}), {0, 2, 1, 3}),
                   {b, s[1], heads * s[2]});
}

template <typename T>
struct MhsaResult {
    Var<T> out;   // attended and projected tokens
    Var<T> value; // raw value projection of the kv tokens
};

// Scaled dot-product attention with separate query and key/value token sets;
// scale is 1/sqrt(D). Self-attention passes the same tokens twice.
template <typename T>
MhsaResult<T> mhsa_cross(Var<T> q_tokens, Var<T> kv_tokens, const AttentionVars<T>& w) {
    Tape<T>& tp = *q_tokens.tape;
    const auto& qs = tp.value(q_tokens).shape();
    const auto& ks = tp.value(kv_tokens).shape();
    if (qs[2] != ks[2])
        throw ShapeError(cat("attention: query channels ", qs[2], " vs key/value channels ",
                             ks[2]));
    const int64_t c = qs[2];
    const auto& wq_shape = tp.value(w.wq).shape();
    if (wq_shape[0] != c)
        throw ShapeError(cat("attention: tokens have ", c, " channels but weights expect ",
                             wq_shape[0]));
    if (c % w.heads != 0)
        throw ShapeError(cat("attention: ", c, " channels not divisible by ", w.heads,
                             " heads"));
    const int64_t d = c / w.heads;

    Var<T> q = linear(q_tokens, w.wq, w.bq);
    Var<T> k = linear(kv_tokens, w.wk, w.bk);
    Var<T> v = linear(kv_tokens, w.wv, w.bv);

    Var<T> qh = split_heads(q, w.heads);
    Var<T> kh = split_heads(k, w.heads);
    Var<T> vh = split_heads(v, w.heads);

    Var<T> scores = scale(matmul(qh, permute(kh, {0, 2, 1})),
                          static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
    Var<T> attn = softmax_last(scores);
    Var<T> y = join_heads(matmul(attn, vh), w.heads);
    return {linear(y, w.wp, w.bp), v};
}

template <typename T>
MhsaResult<T> window_mhsa(Var<T> tokens, const AttentionVars<T>& w) {
    return mhsa_cross(tokens, tokens, w);
}

// Conditional position embedding: x + depthwise_conv(x).
template <typename T>
Var<T> cpe(Var<T> x, Var<T> kernel, Var<T> bias) {
    return add(x, depthwise_conv2d(x, kernel, bias));
}

template <typename T>
struct BranchResult {
    Var<T> out;       // attended map, original spatial order
    Var<T> value_map; // value projection mapped back to NCHW, original order
};

// One CPWin-SA branch: cpe -> (shift) -> partition -> attention -> merge ->
// (unshift). The map must already be divisible by the window grid.
template <typename T>
BranchResult<T> branch_forward(Var<T> x_part, WindowKind kind, int64_t ws, bool shifted,
                               const BranchVars<T>& w) {
    Tape<T>& tp = *x_part.tape;
    const auto& s = tp.value(x_part).shape();
    const int64_t h = s[2], wdt = s[3];

    WindowSpec spec = kind == WindowKind::VerticalEnhanced
                          ? WindowSpec::vertical_enhanced(h, ws, shifted)
                          : kind == WindowKind::HorizontalEnhanced
                                ? WindowSpec::horizontal_enhanced(wdt, ws, shifted)
                                : WindowSpec::squared(ws, shifted);

    Var<T> y = cpe(x_part, w.cpe_w, w.cpe_b);
    if (shifted) y = shift(y, spec);
    Var<T> wins = partition(y, spec);
    Var<T> tokens = to_tokens(wins);
    MhsaResult<T> att = window_mhsa(tokens, w.attn);

    auto restore = [&](Var<T> tok) {
        Var<T> m = merge(from_tokens(tok, spec.win_h, spec.win_w), spec, h, wdt);
        return shifted ? unshift(m, spec) : m;
    };
    return {restore(att.out), restore(att.value)};
}

// Transformer block, channels split into thirds across the three branches:
//   X   = LN(x); X_i = branch_i(X thirds)
//   X^  = concat(X_1,X_2,X_3) + x + DWConv(concat of value maps)
//   out = MLP(LN(X^)) + X^
// Maps whose sides are not multiples of ws are reflect-padded for the
// branch geometry and cropped back before the residual.
template <typename T>
Var<T> cpwin_block(Var<T> x, const BlockVars<T>& w, const BlockGeometry& geom) {
    Tape<T>& tp = *x.tape;
    const auto& s = tp.value(x).shape();
    const int64_t c = s[1], h = s[2], wdt = s[3];
    if (c % 3 != 0)
        throw ConfigError(cat("cpwin_block: ", c, " channels not divisible by 3"));
    const int64_t c3 = c / 3;

    Var<T> xn = layer_norm_nchw(x, w.ln1_gamma, w.ln1_beta);

    const int64_t hp = (h % geom.ws == 0) ? h : (h / geom.ws + 1) * geom.ws;
    const int64_t wp = (wdt % geom.ws == 0) ? wdt : (wdt / geom.ws + 1) * geom.ws;
    const bool padded = hp != h || wp != wdt;
    if (padded) xn = pad_reflect_hw(xn, hp - h, wp - wdt);

    const WindowKind k1 = geom.enhanced ? WindowKind::VerticalEnhanced : WindowKind::Squared;
    const WindowKind k2 = geom.enhanced ? WindowKind::HorizontalEnhanced : WindowKind::Squared;

    BranchResult<T> b1 =
        branch_forward(slice_channels(xn, 0, c3), k1, geom.ws, geom.shifted, w.vewin);
    BranchResult<T> b2 =
        branch_forward(slice_channels(xn, c3, 2 * c3), k2, geom.ws, geom.shifted, w.hewin);
    BranchResult<T> b3 = branch_forward(slice_channels(xn, 2 * c3, c), WindowKind::Squared,
                                        geom.ws, geom.shifted, w.wmsa);

    Var<T> cat = concat_channels<T>({b1.out, b2.out, b3.out});
    Var<T> vmap = concat_channels<T>({b1.value_map, b2.value_map, b3.value_map});
    Var<T> mixed = add(cat, depthwise_conv2d(vmap, w.dwconv_w, w.dwconv_b));
    if (padded) mixed = crop_hw(mixed, h, wdt);

    Var<T> xhat = add(mixed, x);

    Var<T> tok = to_tokens(layer_norm_nchw(xhat, w.ln2_gamma, w.ln2_beta));
    Var<T> mlp = linear(gelu(linear(tok, w.mlp_fc1_w, w.mlp_fc1_b)), w.mlp_fc2_w, w.mlp_fc2_b);
    return add(from_tokens(mlp, h, wdt), xhat);
}

// Overlapping cross-attention core: queries from non-overlapping M x M
// windows, keys/values from the matching overlapped M_o x M_o windows.
template <typename T>
Var<T> ocam_attention(Var<T> x, const OverlapSpec& os, const AttentionVars<T>& w) {
    Tape<T>& tp = *x.tape;
    const auto& s = tp.value(x).shape();
    const int64_t h = s[2], wdt = s[3];

    WindowSpec qspec = WindowSpec::squared(os.m);
    Var<T> q_tok = to_tokens(partition(x, qspec));
    Var<T> kv_tok = to_tokens(unfold_overlapping(x, os));
    MhsaResult<T> att = mhsa_cross(q_tok, kv_tok, w);
    return merge(from_tokens(att.out, os.m, os.m), qspec, h, wdt);
}

// Full module: LN -> overlapped cross attention -> residual. Pads to a
// multiple of M when needed.
template <typename T>
Var<T> ocam(Var<T> x, const OverlapSpec& os, const OcamVars<T>& w) {
    Tape<T>& tp = *x.tape;
    const auto& s = tp.value(x).shape();
    const int64_t h = s[2], wdt = s[3];
    const int64_t hp = (h % os.m == 0) ? h : (h / os.m + 1) * os.m;
    const int64_t wp = (wdt % os.m == 0) ? wdt : (wdt / os.m + 1) * os.m;

    Var<T> xn = layer_norm_nchw(x, w.ln_gamma, w.ln_beta);
    if (hp != h || wp != wdt) xn = pad_reflect_hw(xn, hp - h, wp - wdt);
    Var<T> att = ocam_attention(xn, os, w.attn);
    if (hp != h || wp != wdt) att = crop_hw(att, h, wdt);
    return add(x, att);
}

} // namespace ag
} // namespace cpat
