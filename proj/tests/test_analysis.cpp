#include <doctest.h>

#include "cpat/analysis.hpp"
#include "cpat/data.hpp"
#include "test_util.hpp"

using namespace cpat;
using test::random_tensor;

namespace {

// Independent big-integer evaluation: little-endian limbs, base 1e9.
struct BigNum {
    std::vector<uint32_t> limbs{0};

    static BigNum from(uint64_t v) {
        BigNum b;
        b.limbs.clear();
        if (v == 0) b.limbs.push_back(0);
        while (v > 0) {
            b.limbs.push_back(static_cast<uint32_t>(v % 1000000000ull));
            v /= 1000000000ull;
        }
        return b;
    }

    BigNum mul(uint64_t f) const {
        BigNum out;
        out.limbs.assign(limbs.size() + 3, 0);
        uint64_t carry = 0;
        for (size_t i = 0; i < out.limbs.size(); ++i) {
            unsigned __int128 acc = carry;
            if (i < limbs.size()) acc += static_cast<unsigned __int128>(limbs[i]) * f;
            out.limbs[i] = static_cast<uint32_t>(acc % 1000000000u);
            carry = static_cast<uint64_t>(acc / 1000000000u);
        }
        while (out.limbs.size() > 1 && out.limbs.back() == 0) out.limbs.pop_back();
        return out;
    }

    BigNum add(const BigNum& o) const {
        BigNum out;
        out.limbs.assign(std::max(limbs.size(), o.limbs.size()) + 1, 0);
        uint64_t carry = 0;
        for (size_t i = 0; i < out.limbs.size(); ++i) {
            uint64_t acc = carry;
            if (i < limbs.size()) acc += limbs[i];
            if (i < o.limbs.size()) acc += o.limbs[i];
            out.limbs[i] = static_cast<uint32_t>(acc % 1000000000u);
            carry = acc / 1000000000u;
        }
        while (out.limbs.size() > 1 && out.limbs.back() == 0) out.limbs.pop_back();
        return out;
    }

    std::string str() const {
        std::string s = std::to_string(limbs.back());
        for (size_t i = limbs.size() - 1; i-- > 0;) {
            std::string part = std::to_string(limbs[i]);
            s += std::string(9 - part.size(), '0') + part;
        }
        return s;
    }
};

std::string bignum_global_msa(uint64_t h, uint64_t w, uint64_t c3) {
    BigNum a = BigNum::from(4).mul(h).mul(w).mul(c3).mul(c3);
    BigNum b = BigNum::from(2).mul(h).mul(w).mul(h).mul(w).mul(c3);
    return a.add(b).str();
}

std::string bignum_vewin(uint64_t h, uint64_t w, uint64_t c3, uint64_t ws) {
    BigNum a = BigNum::from(4).mul(h).mul(w).mul(c3).mul(c3);
    BigNum b = BigNum::from(2).mul(h).mul(h).mul(w).mul(ws).mul(c3);
    return a.add(b).str();
}

} // namespace

TEST_CASE("closed forms: degenerate unit case") {
    CHECK(analysis::flops_global_msa(1, 1, 3) == 6);
    CHECK(analysis::flops_vewin(1, 1, 3, 1) == 6);
    CHECK_THROWS_AS(analysis::flops_global_msa(1, 1, 4), ConfigError);
}

TEST_CASE("second-term ratio is exactly W/ws") {
    // (2 (HW)^2 c3) / (2 H^2 W ws c3) = W / ws
    for (auto [h, w, c, ws] : {std::tuple<uint64_t, uint64_t, uint64_t, uint64_t>{256, 256, 180, 16},
                               {64, 64, 12, 4},
                               {128, 128, 30, 8}}) {
        const uint64_t c3 = c / 3;
        const uint64_t global_second = analysis::flops_global_msa(h, w, c) - 4 * h * w * c3 * c3;
        const uint64_t vewin_second = analysis::flops_vewin(h, w, c, ws) - 4 * h * w * c3 * c3;
        CHECK(global_second % vewin_second == 0);
        CHECK(global_second / vewin_second == w / ws);
    }
}

TEST_CASE("closed forms against an independent big-integer evaluation") {
    for (auto [h, w, c, ws] : {std::tuple<uint64_t, uint64_t, uint64_t, uint64_t>{256, 256, 180, 16},
                               {97, 55, 33, 5},
                               {1024, 1024, 180, 16}}) {
        CHECK(std::to_string(analysis::flops_global_msa(h, w, c)) ==
              bignum_global_msa(h, w, c / 3));
        CHECK(std::to_string(analysis::flops_vewin(h, w, c, ws)) ==
              bignum_vewin(h, w, c / 3, ws));
    }
}

TEST_CASE("closed forms are monotone in every argument") {
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const uint64_t h = 1 + rng.uniform_int(64);
        const uint64_t w = 1 + rng.uniform_int(64);
        const uint64_t c = 3 * (1 + rng.uniform_int(32));
        const uint64_t ws = 1 + rng.uniform_int(16);
        CHECK(analysis::flops_global_msa(h + 1, w, c) > analysis::flops_global_msa(h, w, c));
        CHECK(analysis::flops_global_msa(h, w + 1, c) > analysis::flops_global_msa(h, w, c));
        CHECK(analysis::flops_global_msa(h, w, c + 3) > analysis::flops_global_msa(h, w, c));
        CHECK(analysis::flops_vewin(h + 1, w, c, ws) > analysis::flops_vewin(h, w, c, ws));
        CHECK(analysis::flops_vewin(h, w, c, ws + 1) > analysis::flops_vewin(h, w, c, ws));
    }
}

TEST_CASE("mac counter: definitional counts") {
    Rng rng(2);
    {
        CounterScope scope;
        ops::matmul(random_tensor<double>({7, 5}, rng), random_tensor<double>({5, 3}, rng));
        CHECK(scope.macs() == 7u * 5u * 3u);
    }
    {
        CounterScope scope;
        TensorD x = random_tensor<double>({2, 3, 8, 8}, rng);
        TensorD k = random_tensor<double>({4, 3, 3, 3}, rng);
        ops::conv2d(x, k);
        CHECK(scope.macs() == 2u * 4u * 8u * 8u * 3u * 3u * 3u);
    }
    {
        // no active scope: nothing explodes, nothing is counted
        ops::matmul(random_tensor<double>({2, 2}, rng), random_tensor<double>({2, 2}, rng));
        CounterScope scope;
        CHECK(scope.macs() == 0);
    }
}

TEST_CASE("bare enhanced-window attention matches the closed form within 1%") {
    for (auto [h, w, c, heads, ws] :
         {std::tuple<int64_t, int64_t, int64_t, int64_t, int64_t>{64, 64, 12, 2, 4},
          {32, 48, 12, 1, 8},
          {24, 24, 6, 2, 4}}) {
        const uint64_t measured = analysis::measure_attention_macs<double>(
            h, w, c, heads, ws, WindowKind::VerticalEnhanced);
        const uint64_t predicted = analysis::flops_vewin(h, w, c, ws);
        const double rel = std::abs(static_cast<double>(measured) -
                                    static_cast<double>(predicted)) /
                           static_cast<double>(predicted);
        INFO("H=", h, " W=", w, " measured ", measured, " predicted ", predicted);
        CHECK(rel < 0.01);
    }
}

TEST_CASE("flops report table is self-consistent") {
    analysis::FlopsReport r;
    r.add("alpha", 10);
    r.add("beta", 32);
    CHECK(r.total() == 42);
    const std::string t = r.table();
    CHECK(t.find("alpha") != std::string::npos);
    CHECK(t.find("42") != std::string::npos);
}

TEST_CASE("luma conversion endpoints and midpoint") {
    TensorD white = TensorD::full({3, 2, 2}, 255.0);
    TensorD y = analysis::rgb_to_y(white);
    CHECK(y[0] == doctest::Approx(235.0).epsilon(1e-9));
    TensorD black({3, 2, 2});
    CHECK(analysis::rgb_to_y(black)[0] == doctest::Approx(16.0).epsilon(1e-12));
    TensorD gray = TensorD::full({3, 2, 2}, 128.0);
    CHECK(analysis::rgb_to_y(gray)[0] == doctest::Approx(125.93).epsilon(1e-4));

    Rng rng(3);
    TensorD img = random_tensor<double>({3, 4, 4}, rng, 0, 255);
    TensorD yy = analysis::rgb_to_y(img);
    for (int64_t i = 0; i < yy.numel(); ++i) {
        CHECK(yy[i] >= 16.0);
        CHECK(yy[i] <= 235.0);
    }
}

TEST_CASE("psnr: sentinel, closed form, reference oracle, symmetry") {
    Rng rng(4);
    TensorD a = random_tensor<double>({1, 16, 16}, rng, 0, 239);
    CHECK(std::isinf(analysis::psnr(a, a)));

    TensorD b(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) b[i] = a[i] + 16.0;
    // defining closed form: 20*log10(255/16) = 24.0484 dB
    CHECK(analysis::psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0 / 16.0)).epsilon(1e-9));
    CHECK(analysis::psnr(a, b) == doctest::Approx(24.0484).epsilon(1e-4));

    TensorD c = random_tensor<double>({1, 16, 16}, rng, 0, 255);
    double mse = 0;
    for (int64_t i = 0; i < a.numel(); ++i) mse += (a[i] - c[i]) * (a[i] - c[i]);
    mse /= static_cast<double>(a.numel());
    CHECK(std::abs(analysis::psnr(a, c) - 10.0 * std::log10(255.0 * 255.0 / mse)) < 1e-8);
    CHECK(analysis::psnr(a, c) == analysis::psnr(c, a));

    // crop removes the border before scoring
    TensorD d(a.shape());
    std::copy(a.data(), a.data() + a.numel(), d.data());
    d[0] += 100.0; // corner pixel
    CHECK(std::isinf(analysis::psnr(a, d, 255.0, 1)));
}

TEST_CASE("ssim: self-identity, symmetry, degradation ordering") {
    Rng rng(5);
    TensorD a = random_tensor<double>({1, 20, 20}, rng, 0, 255);
    CHECK(analysis::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

    TensorD noisy(a.shape());
    Rng rng2(6);
    for (int64_t i = 0; i < a.numel(); ++i) noisy[i] = a[i] + rng2.uniform(-20, 20);
    const double s1 = analysis::ssim(a, noisy);
    CHECK(s1 < 1.0);
    CHECK(s1 == doctest::Approx(analysis::ssim(noisy, a)).epsilon(1e-12));

    TensorD worse(a.shape());
    Rng rng3(7);
    for (int64_t i = 0; i < a.numel(); ++i) worse[i] = a[i] + rng3.uniform(-60, 60);
    CHECK(analysis::ssim(a, worse) < s1);
}

TEST_CASE("both metrics are invariant under simultaneous dihedral transforms") {
    Rng rng(8);
    TensorD a4 = random_tensor<double>({1, 1, 18, 18}, rng, 0, 255);
    TensorD b4 = random_tensor<double>({1, 1, 18, 18}, rng, 0, 255);
    TensorD a3 = a4.reshape({1, 18, 18});
    TensorD b3 = b4.reshape({1, 18, 18});
    const double p0 = analysis::psnr(a3, b3);
    const double s0 = analysis::ssim(a3, b3);
    for (int rot = 0; rot < 4; ++rot) {
        for (int flip = 0; flip < 2; ++flip) {
            TensorD ta = ops::rot90_hw(flip ? ops::flip_w(a4) : a4, rot);
            TensorD tb = ops::rot90_hw(flip ? ops::flip_w(b4) : b4, rot);
            TensorD ta3 = ta.reshape({1, ta.dim(2), ta.dim(3)});
            TensorD tb3 = tb.reshape({1, tb.dim(2), tb.dim(3)});
            CHECK(analysis::psnr(ta3, tb3) == doctest::Approx(p0).epsilon(1e-10));
            CHECK(analysis::ssim(ta3, tb3) == doctest::Approx(s0).epsilon(1e-10));
        }
    }
}

TEST_CASE("self-ensemble: identity stub, invocation count, equivariant oracle") {
    Rng rng(9);
    TensorD x = random_tensor<double>({1, 3, 8, 6}, rng, 0, 1);

    int calls = 0;
    auto identity = [&](const TensorD& in) {
        ++calls;
        return in;
    };
    TensorD out = analysis::self_ensemble<double>(identity, x);
    CHECK(calls == 8);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(out[i] == x[i]);

    // bicubic x2 upscale commutes with the dihedral group, so the ensemble
    // must agree with a single forward
    auto bicubic2x = [&](const TensorD& in) {
        TensorD chw = in.reshape({in.dim(1), in.dim(2), in.dim(3)});
        TensorD up = data::bicubic_resize(chw, 2 * in.dim(2), 2 * in.dim(3));
        return up.reshape({1, up.dim(0), up.dim(1), up.dim(2)});
    };
    TensorD single = bicubic2x(x);
    TensorD ens = analysis::self_ensemble<double>(bicubic2x, x);
    for (int64_t i = 0; i < single.numel(); ++i) CHECK(std::abs(ens[i] - single[i]) < 1e-6);
}
