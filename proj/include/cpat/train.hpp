#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cpat/analysis.hpp"
#include "cpat/data.hpp"
#include "cpat/model.hpp"

// L1 + Adam training at desk scale. One optimizer step per iteration over a
// seeded patch stream; everything is single-threaded and deterministic for
// a given (config, seed) pair.

namespace cpat::train {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

// Moment state per parameter, in store order.
template <typename T>
class Adam {
public:
    Adam(const WeightStore<T>& store, AdamConfig cfg) : cfg_(cfg) {
        m_.reserve(store.size());
        v_.reserve(store.size());
        for (size_t i = 0; i < store.size(); ++i) {
            m_.emplace_back(store.at(i).shape());
            v_.emplace_back(store.at(i).shape());
        }
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int64_t steps() const { return step_; }

    // grads must be in store order; a zero gradient leaves the parameter
    // untouched.
    void step(WeightStore<T>& store, const std::vector<Tensor<T>>& grads) {
        if (grads.size() != store.size())
            throw ConfigError(cat("adam: ", grads.size(), " gradients for ", store.size(),
                                  " parameters"));
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (size_t i = 0; i < store.size(); ++i) {
            const Tensor<T>& g = grads[i];
            const Tensor<T>& p = store.at(i);
            if (!g.same_shape(p))
                throw ShapeError(cat("adam: gradient ", shape_str(g.shape()),
                                     " vs parameter ", shape_str(p.shape())));
            Tensor<T> updated(p.shape());
            for (int64_t j = 0; j < p.numel(); ++j) {
                const double gj = static_cast<double>(g[j]);
                const double mj = cfg_.beta1 * static_cast<double>(m_[i][j]) +
                                  (1.0 - cfg_.beta1) * gj;
                const double vj = cfg_.beta2 * static_cast<double>(v_[i][j]) +
                                  (1.0 - cfg_.beta2) * gj * gj;
                m_[i][j] = static_cast<T>(mj);
                v_[i][j] = static_cast<T>(vj);
                const double mhat = mj / bc1;
                const double vhat = vj / bc2;
                updated[j] = static_cast<T>(static_cast<double>(p[j]) -
                                            cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
            store.set(store.names()[i], std::move(updated));
        }
    }

private:
    AdamConfig cfg_;
    int64_t step_ = 0;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
};

template <typename T>
ag::Var<T> l1_loss(ag::Var<T> pred, ag::Var<T> target) {
    return ag::mean_all(ag::abs(ag::sub(pred, target)));
}

struct TrainOptions {
    int64_t iters = 200;
    int64_t batch = 4;
    int64_t patch = 16; // LR patch side
    AdamConfig adam;
    int64_t lr_halve_every = 0; // 0 disables the schedule
};

struct LogRow {
    int64_t iter;
    double loss;
    double lr;
    double seconds;
};

template <typename T>
struct TrainResult {
    WeightStore<T> weights;
    std::vector<LogRow> log;
    bool diverged = false;
    uint64_t stream_hash = 0;
};

// Stacks [3,h,w] patches into one [B,3,h,w] batch tensor.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& patches) {
    const auto& s = patches.at(0).shape();
    Tensor<T> out({static_cast<int64_t>(patches.size()), s[0], s[1], s[2]});
    const int64_t per = patches[0].numel();
    for (size_t b = 0; b < patches.size(); ++b)
        std::copy(patches[b].data(), patches[b].data() + per, out.data() + b * per);
    return out;
}

// On a non-finite loss the loop stops immediately and returns the weights
// from before the bad step, flagged as diverged.
template <typename T>
TrainResult<T> run_training(const CPATConfig& cfg, WeightStore<T> store,
                            data::PairStream<T>& stream, const TrainOptions& opts) {
    TrainResult<T> result;
    Adam<T> adam(store, opts.adam);
    const auto t0 = std::chrono::steady_clock::now();

    for (int64_t it = 0; it < opts.iters; ++it) {
        if (opts.lr_halve_every > 0 && it > 0 && it % opts.lr_halve_every == 0)
            adam.set_lr(adam.lr() * 0.5);

        std::vector<Tensor<T>> lr_patches, hr_patches;
        for (int64_t b = 0; b < opts.batch; ++b) {
            auto pair = stream.next();
            lr_patches.push_back(std::move(pair.lr));
            hr_patches.push_back(std::move(pair.hr));
        }

        ag::Tape<T> tape;
        Model<T> model(tape, store, cfg, /*requires_grad=*/true);
        ag::Var<T> x = tape.leaf(stack_batch(lr_patches));
        ag::Var<T> target = tape.leaf(stack_batch(hr_patches));
        ag::Var<T> loss = l1_loss(model.forward(x), target);
        const double loss_val = static_cast<double>(tape.value(loss)[0]);

        if (!std::isfinite(loss_val)) {
            result.diverged = true;
            break;
        }

        tape.backward(loss);
        std::vector<Tensor<T>> grads;
        grads.reserve(model.param_names().size());
        for (const std::string& name : model.param_names())
            grads.push_back(tape.grad(model.var(name)));
        adam.step(store, grads);

        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back({it, loss_val, adam.lr(), secs});
    }

    result.weights = std::move(store);
    result.stream_hash = stream.stream_hash();
    return result;
}

// Mean Y-channel PSNR of the model against a set of HR images whose LR
// inputs are bicubic downscales; predictions are quantized through 8-bit
// like any saved output would be. Border crop equals the scale.
template <typename T>
double evaluate_psnr_y(const WeightStore<T>& store, const CPATConfig& cfg,
                       const std::vector<ImageRGB>& hr_images) {
    if (hr_images.empty()) throw DataError("evaluate: no images");
    double sum = 0.0;
    for (const ImageRGB& hr_img : hr_images) {
        if (hr_img.width % cfg.scale != 0 || hr_img.height % cfg.scale != 0)
            throw DataError(cat("evaluate: image ", hr_img.width, "x", hr_img.height,
                                " not divisible by scale ", cfg.scale));
        Tensor<T> hr = data::image_to_tensor<T>(hr_img);
        Tensor<T> lr = data::bicubic_resize(hr, hr_img.height / cfg.scale,
                                            hr_img.width / cfg.scale);
        Tensor<T> sr4 = cpat_forward(lr.reshape({1, 3, lr.dim(1), lr.dim(2)}), store, cfg);
        Tensor<T> sr = sr4.reshape({3, sr4.dim(2), sr4.dim(3)});
        // quantize like a saved image, then score on the Y channel in [0,255]
        Tensor<T> sr_q = data::image_to_tensor<T>(data::tensor_to_image(sr));
        sum += analysis::psnr(analysis::rgb_to_y(ops::scale(sr_q, T(255))),
                              analysis::rgb_to_y(ops::scale(hr, T(255))), 255.0, cfg.scale);
    }
    return sum / static_cast<double>(hr_images.size());
}

// First/last window means of the logged losses; the smoothing used by the
// toy-training checks.
inline double smoothed_head(const std::vector<LogRow>& log, size_t window) {
    window = std::min(window, log.size());
    double s = 0;
    for (size_t i = 0; i < window; ++i) s += log[i].loss;
    return s / static_cast<double>(window);
}

inline double smoothed_tail(const std::vector<LogRow>& log, size_t window) {
    window = std::min(window, log.size());
    double s = 0;
    for (size_t i = log.size() - window; i < log.size(); ++i) s += log[i].loss;
    return s / static_cast<double>(window);
}

} // namespace cpat::train
