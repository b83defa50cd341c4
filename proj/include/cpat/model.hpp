#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpat/attention.hpp"
#include "cpat/rng.hpp"
#include "cpat/sfim.hpp"
#include "cpat/weights.hpp"

// Full network assembly: dimensionality expansion, the residual window
// attention groups of the complex-feature-learning stage, and pixel-shuffle
// reconstruction. Parameter names, shapes and init rules all come from one
// manifest walk, so the store layout, the tape binding and the parameter
// count can never drift apart.

namespace cpat {

struct CPATConfig {
    int64_t c_in = 3;
    int64_t c_out = 3;
    int64_t channels = 180;     // embedding width C
    int64_t rwags = 6;          // residual group count L1
    int64_t blocks_per_rwag = 6;
    int64_t ws = 16;            // window size
    int64_t heads = 6;
    double mlp_ratio = 2.0;
    int64_t scale = 2;
    double overlap_alpha = 0.5;

    // ablation toggles
    bool enhanced_windows = true;
    bool shift = true;
    bool sfim = true;       // false: every SFIM site becomes a plain 3x3 conv
    bool freq_domain = true;

    // the pipeline applies SFIM both inside each group and once after the
    // last group; either site can be switched off independently
    bool sfim_per_rwag = true;
    bool sfim_final = true;

    int64_t mlp_hidden() const {
        return static_cast<int64_t>(std::llround(mlp_ratio * static_cast<double>(channels)));
    }

    void validate() const {
        if (channels % 3 != 0)
            throw ConfigError(cat("config: channels = ", channels, " not divisible by 3"));
        if ((channels / 3) % heads != 0)
            throw ConfigError(cat("config: channels/3 = ", channels / 3,
                                  " not divisible by heads = ", heads));
        if (ws < 2 || ws % 2 != 0)
            throw ConfigError(cat("config: window size ", ws, " must be even and >= 2"));
        if (scale < 2 || scale > 4)
            throw ConfigError(cat("config: scale ", scale, " not in {2,3,4}"));
        if (rwags < 1 || blocks_per_rwag < 1)
            throw ConfigError("config: need at least one group and one block");
        if (channels % 2 != 0 && sfim)
            throw ConfigError(cat("config: channels = ", channels,
                                  " must be even for the spatial split"));
        if (mlp_hidden() < 1) throw ConfigError("config: mlp ratio too small");
        OverlapSpec check(ws, overlap_alpha); // throws on bad overlap geometry
        (void)check;
    }

    static CPATConfig toy() {
        CPATConfig c;
        c.channels = 12;
        c.rwags = 1;
        c.blocks_per_rwag = 2;
        c.ws = 4;
        c.heads = 2;
        c.scale = 2;
        return c;
    }
};

enum class ParamRole { Projection, ConvKernel, NormGamma, NormBeta, Bias };

struct ParamInfo {
    std::string name;
    std::vector<int64_t> shape;
    ParamRole role;
};

// Block j inside a group: even blocks unshifted, odd blocks shifted, so the
// pair of consecutive blocks covers both alignments.
inline BlockGeometry block_geometry(const CPATConfig& cfg, int64_t block_index) {
    return {cfg.ws, cfg.enhanced_windows, cfg.shift && (block_index % 2 == 1)};
}

inline std::array<WindowKind, 3> branch_kinds(const BlockGeometry& geom) {
    if (geom.enhanced)
        return {WindowKind::VerticalEnhanced, WindowKind::HorizontalEnhanced,
                WindowKind::Squared};
    return {WindowKind::Squared, WindowKind::Squared, WindowKind::Squared};
}

namespace detail {

template <typename Fn>
void manifest_attention(const std::string& prefix, int64_t c, Fn&& fn) {
    fn(ParamInfo{prefix + ".wq", {c, c}, ParamRole::Projection});
    fn(ParamInfo{prefix + ".bq", {c}, ParamRole::Bias});
    fn(ParamInfo{prefix + ".wk", {c, c}, ParamRole::Projection});
    fn(ParamInfo{prefix + ".bk", {c}, ParamRole::Bias});
    fn(ParamInfo{prefix + ".wv", {c, c}, ParamRole::Projection});
    fn(ParamInfo{prefix + ".bv", {c}, ParamRole::Bias});
    fn(ParamInfo{prefix + ".wp", {c, c}, ParamRole::Projection});
    fn(ParamInfo{prefix + ".bp", {c}, ParamRole::Bias});
}

template <typename Fn>
void manifest_conv(const std::string& prefix, int64_t out_c, int64_t in_c, int64_t k, Fn&& fn) {
    fn(ParamInfo{prefix + ".w", {out_c, in_c, k, k}, ParamRole::ConvKernel});
    fn(ParamInfo{prefix + ".b", {out_c}, ParamRole::Bias});
}

template <typename Fn>
void manifest_depthwise(const std::string& prefix, int64_t c, Fn&& fn) {
    fn(ParamInfo{prefix + ".w", {c, 1, 3, 3}, ParamRole::ConvKernel});
    fn(ParamInfo{prefix + ".b", {c}, ParamRole::Bias});
}

template <typename Fn>
void manifest_sfim(const std::string& prefix, int64_t c, bool freq, Fn&& fn) {
    manifest_conv(prefix + ".sp1", c, c, 1, fn);
    manifest_conv(prefix + ".sp3a", c / 2, c / 2, 3, fn);
    manifest_conv(prefix + ".sp3b", c / 2, c / 2, 3, fn);
    manifest_conv(prefix + ".fqe", c, c, 3, fn);
    manifest_conv(prefix + ".fqp", c, c, 3, fn);
    if (freq) manifest_conv(prefix + ".fqs", 2 * c, 2 * c, 1, fn);
    manifest_conv(prefix + ".fqx", c, c, 1, fn);
    manifest_conv(prefix + ".fuse", c, 2 * c, 1, fn);
}

} // namespace detail

// Walks every parameter of the configured model in store order.
template <typename Fn>
void for_each_param(const CPATConfig& cfg, Fn&& fn) {
    cfg.validate();
    const int64_t c = cfg.channels;
    const int64_t c3 = c / 3;

    detail::manifest_conv("de.conv1", c, cfg.c_in, 3, fn);
    detail::manifest_conv("de.conv2a", c, cfg.c_in, 3, fn);
    detail::manifest_conv("de.conv2b", c, c, 3, fn);

    for (int64_t g = 0; g < cfg.rwags; ++g) {
        const std::string gp = cat("rwag", g);
        for (int64_t b = 0; b < cfg.blocks_per_rwag; ++b) {
            const std::string bp = cat(gp, ".block", b);
            fn(ParamInfo{bp + ".ln1.g", {c}, ParamRole::NormGamma});
            fn(ParamInfo{bp + ".ln1.b", {c}, ParamRole::NormBeta});
            for (const char* branch : {".vewin", ".hewin", ".wmsa"}) {
                detail::manifest_attention(bp + branch, c3, fn);
                detail::manifest_depthwise(bp + branch + ".cpe", c3, fn);
            }
            detail::manifest_depthwise(bp + ".dw", c, fn);
            fn(ParamInfo{bp + ".ln2.g", {c}, ParamRole::NormGamma});
            fn(ParamInfo{bp + ".ln2.b", {c}, ParamRole::NormBeta});
            fn(ParamInfo{bp + ".mlp.fc1.w", {c, cfg.mlp_hidden()}, ParamRole::Projection});
            fn(ParamInfo{bp + ".mlp.fc1.b", {cfg.mlp_hidden()}, ParamRole::Bias});
            fn(ParamInfo{bp + ".mlp.fc2.w", {cfg.mlp_hidden(), c}, ParamRole::Projection});
            fn(ParamInfo{bp + ".mlp.fc2.b", {c}, ParamRole::Bias});
        }
        fn(ParamInfo{gp + ".ocam.ln.g", {c}, ParamRole::NormGamma});
        fn(ParamInfo{gp + ".ocam.ln.b", {c}, ParamRole::NormBeta});
        detail::manifest_attention(gp + ".ocam", c, fn);
        if (cfg.sfim_per_rwag) {
            if (cfg.sfim)
                detail::manifest_sfim(gp + ".sfim", c, cfg.freq_domain, fn);
            else
                detail::manifest_conv(gp + ".fuse_conv", c, c, 3, fn);
        }
        detail::manifest_conv(gp + ".conv", c, c, 3, fn);
    }

    if (cfg.sfim_final) {
        if (cfg.sfim)
            detail::manifest_sfim("final_sfim", c, cfg.freq_domain, fn);
        else
            detail::manifest_conv("final_fuse_conv", c, c, 3, fn);
    }

    detail::manifest_conv("ir.conv_pre", c, c, 3, fn);
    if (cfg.scale == 4) {
        detail::manifest_conv("ir.up0", 4 * c, c, 3, fn);
        detail::manifest_conv("ir.up1", 4 * c, c, 3, fn);
    } else {
        detail::manifest_conv("ir.up0", cfg.scale * cfg.scale * c, c, 3, fn);
    }
    detail::manifest_conv("ir.conv_last", cfg.c_out, c, 3, fn);
}

inline std::vector<ParamInfo> param_manifest(const CPATConfig& cfg) {
    std::vector<ParamInfo> out;
    for_each_param(cfg, [&](const ParamInfo& p) { out.push_back(p); });
    return out;
}

inline int64_t param_count(const CPATConfig& cfg) {
    int64_t n = 0;
    for_each_param(cfg, [&](const ParamInfo& p) {
        int64_t e = 1;
        for (int64_t d : p.shape) e *= d;
        n += e;
    });
    return n;
}

// Truncated normal (std 0.02, clip 2 sigma) for projections, fan-in scaled
// normals for conv kernels, gamma = 1, beta = 0, all biases zero.
// Deterministic for a given seed.
template <typename T>
WeightStore<T> init_weights(const CPATConfig& cfg, uint64_t seed) {
    WeightStore<T> store;
    Rng rng(seed);
    for_each_param(cfg, [&](const ParamInfo& p) {
        Tensor<T> t(p.shape);
        switch (p.role) {
            case ParamRole::Projection:
                for (int64_t i = 0; i < t.numel(); ++i)
                    t[i] = static_cast<T>(rng.trunc_normal(0.02));
                break;
            case ParamRole::ConvKernel: {
                int64_t fan_in = 1;
                for (size_t d = 1; d < p.shape.size(); ++d) fan_in *= p.shape[d];
                const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
                for (int64_t i = 0; i < t.numel(); ++i)
                    t[i] = static_cast<T>(rng.normal() * stddev);
                break;
            }
            case ParamRole::NormGamma:
                for (int64_t i = 0; i < t.numel(); ++i) t[i] = T(1);
                break;
            case ParamRole::NormBeta:
            case ParamRole::Bias:
                break; // stays zero
        }
        store.add(p.name, std::move(t));
    });
    return store;
}

// Binds a weight store onto a tape and exposes the pipeline stages. The
// store must carry exactly the parameters the config calls for.
template <typename T>
class Model {
public:
    Model(ag::Tape<T>& tape, const WeightStore<T>& store, const CPATConfig& cfg,
          bool requires_grad = false)
        : tape_(tape), cfg_(cfg) {
        cfg.validate();
        for_each_param(cfg, [&](const ParamInfo& p) {
            const Tensor<T>& v = store.get(p.name); // throws naming a missing parameter
            if (v.shape() != p.shape)
                throw ConfigError(cat("parameter '", p.name, "': weight file has ",
                                      shape_str(v.shape()), ", config expects ",
                                      shape_str(p.shape)));
            order_.push_back(p.name);
            vars_.emplace(p.name, tape_.leaf(v, requires_grad));
        });
    }

    const CPATConfig& config() const { return cfg_; }
    ag::Tape<T>& tape() { return tape_; }
    const std::vector<std::string>& param_names() const { return order_; }

    ag::Var<T> var(const std::string& name) const {
        auto it = vars_.find(name);
        if (it == vars_.end())
            throw ConfigError(cat("model: no parameter '", name, "' bound"));
        return it->second;
    }

    // I_DE1 = conv3x3(I_LR); I_DE2 = conv3x3(act(conv3x3(I_LR)))
    std::pair<ag::Var<T>, ag::Var<T>> dimensionality_expansion(ag::Var<T> ilr) const {
        ag::Var<T> de1 = conv(ilr, "de.conv1");
        ag::Var<T> de2 = conv(ag::leaky_relu(conv(ilr, "de.conv2a")), "de.conv2b");
        return {de1, de2};
    }

    ag::Var<T> rwag_forward(ag::Var<T> x, int64_t g) const {
        const std::string gp = cat("rwag", g);
        ag::Var<T> y = x;
        for (int64_t b = 0; b < cfg_.blocks_per_rwag; ++b)
            y = ag::cpwin_block(y, block_vars(cat(gp, ".block", b)), block_geometry(cfg_, b));
        y = ag::ocam(y, OverlapSpec(cfg_.ws, cfg_.overlap_alpha), ocam_vars(gp + ".ocam"));
        if (cfg_.sfim_per_rwag) y = sfim_site(y, gp);
        y = conv(y, gp + ".conv");
        return ag::add(y, x);
    }

    // x_0 = I_DE1; x_i = RWAG_i(x_{i-1}) + I_DE2; out = F(x_L) + I_DE2
    ag::Var<T> cfl_forward(ag::Var<T> de1, ag::Var<T> de2) const {
        ag::Var<T> x = de1;
        for (int64_t g = 0; g < cfg_.rwags; ++g) x = ag::add(rwag_forward(x, g), de2);
        if (cfg_.sfim_final) x = ag::add(final_site(x), de2);
        return x;
    }

    ag::Var<T> reconstruct(ag::Var<T> ocfl, ag::Var<T> de1) const {
        ag::Var<T> z = conv(ag::add(ocfl, de1), "ir.conv_pre");
        if (cfg_.scale == 4) {
            z = ag::pixel_shuffle(conv(z, "ir.up0"), 2);
            z = ag::pixel_shuffle(conv(z, "ir.up1"), 2);
        } else {
            z = ag::pixel_shuffle(conv(z, "ir.up0"), cfg_.scale);
        }
        return conv(z, "ir.conv_last");
    }

    ag::Var<T> forward(ag::Var<T> ilr) const {
        auto [de1, de2] = dimensionality_expansion(ilr);
        return reconstruct(cfl_forward(de1, de2), de1);
    }

    // stage helpers reused by the FLOPs report
    ag::Var<T> final_site(ag::Var<T> x) const {
        if (cfg_.sfim) return ag::sfim_forward(x, sfim_vars("final_sfim"), cfg_.freq_domain);
        return conv(x, "final_fuse_conv");
    }

private:
    ag::Var<T> conv(ag::Var<T> x, const std::string& prefix) const {
        return ag::conv2d(x, var(prefix + ".w"), var(prefix + ".b"));
    }

    ag::Var<T> sfim_site(ag::Var<T> x, const std::string& gp) const {
        if (cfg_.sfim) return ag::sfim_forward(x, sfim_vars(gp + ".sfim"), cfg_.freq_domain);
        return conv(x, gp + ".fuse_conv");
    }

    AttentionVars<T> attention_vars(const std::string& p) const {
        return {var(p + ".wq"), var(p + ".bq"), var(p + ".wk"), var(p + ".bk"),
                var(p + ".wv"), var(p + ".bv"), var(p + ".wp"), var(p + ".bp"), cfg_.heads};
    }

    BranchVars<T> branch_vars(const std::string& p) const {
        return {attention_vars(p), var(p + ".cpe.w"), var(p + ".cpe.b")};
    }

    BlockVars<T> block_vars(const std::string& p) const {
        BlockVars<T> b;
        b.ln1_gamma = var(p + ".ln1.g");
        b.ln1_beta = var(p + ".ln1.b");
        b.ln2_gamma = var(p + ".ln2.g");
        b.ln2_beta = var(p + ".ln2.b");
        b.vewin = branch_vars(p + ".vewin");
        b.hewin = branch_vars(p + ".hewin");
        b.wmsa = branch_vars(p + ".wmsa");
        b.dwconv_w = var(p + ".dw.w");
        b.dwconv_b = var(p + ".dw.b");
        b.mlp_fc1_w = var(p + ".mlp.fc1.w");
        b.mlp_fc1_b = var(p + ".mlp.fc1.b");
        b.mlp_fc2_w = var(p + ".mlp.fc2.w");
        b.mlp_fc2_b = var(p + ".mlp.fc2.b");
        return b;
    }

    OcamVars<T> ocam_vars(const std::string& p) const {
        return {var(p + ".ln.g"), var(p + ".ln.b"), attention_vars(p)};
    }

    SfimVars<T> sfim_vars(const std::string& p) const {
        SfimVars<T> s;
        s.sp_conv1_w = var(p + ".sp1.w");
        s.sp_conv1_b = var(p + ".sp1.b");
        s.sp_conv3a_w = var(p + ".sp3a.w");
        s.sp_conv3a_b = var(p + ".sp3a.b");
        s.sp_conv3b_w = var(p + ".sp3b.w");
        s.sp_conv3b_b = var(p + ".sp3b.b");
        s.fq_entry_w = var(p + ".fqe.w");
        s.fq_entry_b = var(p + ".fqe.b");
        s.fq_pre_w = var(p + ".fqp.w");
        s.fq_pre_b = var(p + ".fqp.b");
        if (cfg_.freq_domain) {
            s.fq_spec_w = var(p + ".fqs.w");
            s.fq_spec_b = var(p + ".fqs.b");
        }
        s.fq_exit_w = var(p + ".fqx.w");
        s.fq_exit_b = var(p + ".fqx.b");
        s.fuse_w = var(p + ".fuse.w");
        s.fuse_b = var(p + ".fuse.b");
        return s;
    }

    ag::Tape<T>& tape_;
    CPATConfig cfg_;
    std::vector<std::string> order_;
    std::unordered_map<std::string, ag::Var<T>> vars_;
};

// Inference entry point; runs the whole pipeline on a fresh tape.
template <typename T>
Tensor<T> cpat_forward(const Tensor<T>& ilr, const WeightStore<T>& store,
                       const CPATConfig& cfg) {
    ag::Tape<T> tape;
    Model<T> model(tape, store, cfg);
    ag::Var<T> x = tape.leaf(ilr);
    return tape.value(model.forward(x));
}

} // namespace cpat
