#include <doctest.h>

#include "cpat/autograd.hpp"
#include "cpat/windowing.hpp"
#include "test_util.hpp"

using namespace cpat;
using test::check_gradients;
using test::random_tensor;

using VarD = ag::Var<double>;
using TapeD = ag::Tape<double>;
using Vars = std::vector<VarD>;

namespace {

// dot against a fixed random tensor makes the loss sensitive to every output
VarD probe_loss(TapeD& t, VarD out, uint64_t seed = 99) {
    Rng rng(seed);
    VarD mask = t.leaf(random_tensor<double>(t.value(out).shape(), rng));
    return ag::sum_all(ag::mul(out, mask));
}

} // namespace

TEST_CASE("sum loss gives all-ones gradient") {
    TapeD tape;
    Rng rng(1);
    VarD x = tape.leaf(random_tensor<double>({3, 4}, rng), true);
    tape.backward(ag::sum_all(x));
    TensorD g = tape.grad(x);
    for (int64_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("quadratic loss matches the closed form") {
    // loss = ||W x||^2, dL/dW = 2 (W x) x^T
    TapeD tape;
    Rng rng(2);
    TensorD wval = random_tensor<double>({3, 2}, rng);
    TensorD xval = random_tensor<double>({2, 1}, rng);
    VarD w = tape.leaf(wval, true);
    VarD x = tape.leaf(xval);
    VarD y = ag::matmul(w, x);
    tape.backward(ag::sum_all(ag::mul(y, y)));
    TensorD g = tape.grad(w);
    TensorD yv = ops::matmul(wval, xval);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 2; ++j)
            CHECK(g.at(i, j) == doctest::Approx(2.0 * yv[i] * xval[j]).epsilon(1e-12));
}

TEST_CASE("non-scalar loss is rejected; absent parameters get exact zeros") {
    TapeD tape;
    Rng rng(3);
    VarD x = tape.leaf(random_tensor<double>({2, 2}, rng), true);
    VarD unused = tape.leaf(random_tensor<double>({5}, rng), true);
    CHECK_THROWS_AS(tape.backward(x), NumericError);
    tape.backward(ag::sum_all(x));
    TensorD g = tape.grad(unused);
    CHECK(g.shape() == std::vector<int64_t>{5});
    for (int64_t i = 0; i < 5; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("finite differences: pointwise and reduction ops") {
    Rng rng(4);
    auto ck = [&](const char* what, std::vector<TensorD> inputs, auto fn) {
        auto r = check_gradients<double>(std::move(inputs), fn);
        INFO(what, ": ", r.detail);
        CHECK(r.ok);
    };

    ck("add/mul/sub mix", {random_tensor<double>({3, 4}, rng), random_tensor<double>({3, 4}, rng)},
       [](TapeD& t, const Vars& v) {
           return probe_loss(t, ag::add(ag::mul(v[0], v[1]), ag::sub(v[0], v[1])));
       });
    ck("scale+abs", {random_tensor<double>({4, 4}, rng)}, [](TapeD& t, const Vars& v) {
        return probe_loss(t, ag::abs(ag::scale(v[0], 1.7)));
    });
    ck("gelu", {random_tensor<double>({3, 5}, rng, -2, 2)}, [](TapeD& t, const Vars& v) {
        return probe_loss(t, ag::gelu(v[0]));
    });
    ck("leaky_relu", {random_tensor<double>({3, 5}, rng, -2, 2)}, [](TapeD& t, const Vars& v) {
        return probe_loss(t, ag::leaky_relu(v[0]));
    });
    ck("mean_all", {random_tensor<double>({3, 5}, rng)}, [](TapeD& t, const Vars& v) {
        return ag::mean_all(ag::mul(v[0], v[0]));
    });
}

TEST_CASE("finite differences: linear algebra") {
    Rng rng(5);
    auto ck = [&](const char* what, std::vector<TensorD> inputs, auto fn) {
        auto r = check_gradients<double>(std::move(inputs), fn);
        INFO(what, ": ", r.detail);
        CHECK(r.ok);
    };

    ck("matmul 2d", {random_tensor<double>({3, 4}, rng), random_tensor<double>({4, 2}, rng)},
       [](TapeD& t, const Vars& v) { return probe_loss(t, ag::matmul(v[0], v[1])); });
    ck("matmul batched lhs",
       {random_tensor<double>({2, 3, 4}, rng), random_tensor<double>({4, 2}, rng)},
       [](TapeD& t, const Vars& v) { return probe_loss(t, ag::matmul(v[0], v[1])); });
    ck("matmul batched both",
       {random_tensor<double>({2, 3, 4}, rng), random_tensor<double>({2, 4, 2}, rng)},
       [](TapeD& t, const Vars& v) { return probe_loss(t, ag::matmul(v[0], v[1])); });
    ck("bias", {random_tensor<double>({3, 4}, rng), random_tensor<double>({4}, rng)},
       [](TapeD& t, const Vars& v) { return probe_loss(t, ag::add_bias_last(v[0], v[1])); });
    ck("softmax", {random_tensor<double>({3, 5}, rng, -2, 2)}, [](TapeD& t, const Vars& v) {
        return probe_loss(t, ag::softmax_last(v[0]));
    });
    ck("layer_norm",
       {random_tensor<double>({4, 6}, rng), random_tensor<double>({6}, rng, 0.5, 1.5),
        random_tensor<double>({6}, rng)},
       [](TapeD& t, const Vars& v) { return probe_loss(t, ag::layer_norm(v[0], v[1], v[2])); });
}

TEST_CASE("finite differences: convolutions") {
    Rng rng(6);
    auto ck = [&](const char* what, std::vector<TensorD> inputs, auto fn) {
        auto r = check_gradients<double>(std::move(inputs), fn);
        INFO(what, ": ", r.detail);
        CHECK(r.ok);
    };

    ck("conv2d",
       {random_tensor<double>({1, 2, 4, 4}, rng), random_tensor<double>({3, 2, 3, 3}, rng),
        random_tensor<double>({3}, rng)},
       [](TapeD& t, const Vars& v) { return probe_loss(t, ag::conv2d(v[0], v[1], v[2])); });
    ck("depthwise",
       {random_tensor<double>({1, 3, 4, 4}, rng), random_tensor<double>({3, 1, 3, 3}, rng),
        random_tensor<double>({3}, rng)},
       [](TapeD& t, const Vars& v) {
           return probe_loss(t, ag::depthwise_conv2d(v[0], v[1], v[2]));
       });
}

TEST_CASE("finite differences: layout, shuffle, pad, windows") {
    Rng rng(7);
    auto ck = [&](const char* what, std::vector<TensorD> inputs, auto fn) {
        auto r = check_gradients<double>(std::move(inputs), fn);
        INFO(what, ": ", r.detail);
        CHECK(r.ok);
    };

    ck("permute+reshape", {random_tensor<double>({2, 3, 4}, rng)}, [](TapeD& t, const Vars& v) {
        return probe_loss(t, ag::reshape(ag::permute(v[0], {2, 0, 1}), {4, 6}));
    });
    ck("pixel_shuffle", {random_tensor<double>({1, 8, 2, 3}, rng)}, [](TapeD& t, const Vars& v) {
        return probe_loss(t, ag::pixel_shuffle(v[0], 2));
    });
    ck("slice+concat", {random_tensor<double>({1, 4, 3, 3}, rng)}, [](TapeD& t, const Vars& v) {
        VarD lo = ag::slice_channels(v[0], 0, 1);
        VarD hi = ag::slice_channels(v[0], 1, 4);
        return probe_loss(t, ag::concat_channels<double>({hi, lo}));
    });
    ck("pad+crop", {random_tensor<double>({1, 2, 4, 5}, rng)}, [](TapeD& t, const Vars& v) {
        return probe_loss(t, ag::crop_hw(ag::pad_reflect_hw(v[0], 2, 3), 5, 6));
    });
    ck("partition/merge/shift", {random_tensor<double>({1, 2, 4, 4}, rng)},
       [](TapeD& t, const Vars& v) {
           WindowSpec spec = WindowSpec::squared(2, true);
           VarD w = ag::partition(ag::shift(v[0], spec), spec);
           return probe_loss(t, ag::unshift(ag::merge(w, spec, 4, 4), spec));
       });
    ck("unfold_overlapping", {random_tensor<double>({1, 2, 4, 4}, rng)},
       [](TapeD& t, const Vars& v) {
           return probe_loss(t, ag::unfold_overlapping(v[0], OverlapSpec(2, 1.0)));
       });
}

TEST_CASE("finite differences: spectral ops") {
    Rng rng(8);
    auto ck = [&](const char* what, std::vector<TensorD> inputs, auto fn) {
        auto r = check_gradients<double>(std::move(inputs), fn);
        INFO(what, ": ", r.detail);
        CHECK(r.ok);
    };

    ck("fft2_stack", {random_tensor<double>({1, 2, 3, 5}, rng)}, [](TapeD& t, const Vars& v) {
        return probe_loss(t, ag::fft2_stack(v[0]));
    });
    ck("ifft2_real_stack", {random_tensor<double>({1, 4, 3, 4}, rng)},
       [](TapeD& t, const Vars& v) { return probe_loss(t, ag::ifft2_real_stack(v[0])); });
    ck("fft roundtrip with spectrum mix", {random_tensor<double>({1, 2, 4, 4}, rng)},
       [](TapeD& t, const Vars& v) {
           VarD f = ag::fft2_stack(v[0]);
           return probe_loss(t, ag::ifft2_real_stack(ag::leaky_relu(f)));
       });
}
