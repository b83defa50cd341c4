#include <doctest.h>

#include "cpat/windowing.hpp"
#include "test_util.hpp"

using namespace cpat;
using test::random_tensor;

namespace {

bool bitwise_equal(const TensorD& a, const TensorD& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

} // namespace

TEST_CASE("window counts") {
    Rng rng(1);
    TensorD x = random_tensor<double>({1, 1, 4, 4}, rng);
    TensorD w = win::partition(x, WindowSpec::squared(2));
    CHECK(w.shape() == std::vector<int64_t>{4, 1, 2, 2});

    TensorD y = random_tensor<double>({1, 3, 8, 8}, rng);
    TensorD we = win::partition(y, WindowSpec::vertical_enhanced(8, 2));
    CHECK(we.shape() == std::vector<int64_t>{4, 3, 8, 2});

    // column windows: count depends on W only, row windows on H only
    for (int64_t h : {4, 8, 12}) {
        TensorD v = random_tensor<double>({1, 1, h, 8}, rng);
        CHECK(win::partition(v, WindowSpec::vertical_enhanced(h, 2)).dim(0) == 4);
    }
    for (int64_t w2 : {4, 8, 12}) {
        TensorD v = random_tensor<double>({1, 1, 8, w2}, rng);
        CHECK(win::partition(v, WindowSpec::horizontal_enhanced(w2, 2)).dim(0) == 4);
    }
}

TEST_CASE("window ordering is row-major") {
    // 4x4 ramp, 2x2 windows: window 1 must hold columns 2..3 of rows 0..1
    TensorD x({1, 1, 4, 4});
    for (int64_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
    TensorD w = win::partition(x, WindowSpec::squared(2));
    CHECK(w.at(int64_t(1), int64_t(0), int64_t(0), int64_t(0)) == 2.0);
    CHECK(w.at(int64_t(1), int64_t(0), int64_t(1), int64_t(1)) == 7.0);
    CHECK(w.at(int64_t(2), int64_t(0), int64_t(0), int64_t(0)) == 8.0);
}

TEST_CASE("merge inverts partition for every kind") {
    Rng rng(2);
    TensorD x = random_tensor<double>({1, 3, 16, 16}, rng);
    for (WindowSpec spec : {WindowSpec::squared(4), WindowSpec::vertical_enhanced(16, 4),
                            WindowSpec::horizontal_enhanced(16, 4)}) {
        TensorD rt = win::merge(win::partition(x, spec), spec, 16, 16);
        CHECK(bitwise_equal(rt, x));
    }
}

TEST_CASE("cyclic shift semantics") {
    Rng rng(3);
    TensorD x = random_tensor<double>({2, 2, 4, 4}, rng);
    WindowSpec none = WindowSpec::squared(2, false);
    CHECK(bitwise_equal(win::shift(x, none), x));

    // leftward by one: columns [0,1,2,3] -> [1,2,3,0]
    TensorD row({1, 1, 1, 4}, {0, 1, 2, 3});
    TensorD rolled = win::roll(row, 0, -1);
    CHECK(rolled[0] == 1);
    CHECK(rolled[1] == 2);
    CHECK(rolled[2] == 3);
    CHECK(rolled[3] == 0);

    for (WindowSpec spec :
         {WindowSpec::squared(2, true), WindowSpec::vertical_enhanced(4, 2, true),
          WindowSpec::horizontal_enhanced(4, 2, true)}) {
        CHECK(bitwise_equal(win::unshift(win::shift(x, spec), spec), x));
    }
}

TEST_CASE("shift direction per kind") {
    WindowSpec v = WindowSpec::vertical_enhanced(8, 4, true);
    CHECK(v.shift_dx == -2);
    CHECK(v.shift_dy == 0);
    WindowSpec h = WindowSpec::horizontal_enhanced(8, 4, true);
    CHECK(h.shift_dx == 0);
    CHECK(h.shift_dy == 2);
}

TEST_CASE("unfold with zero overlap equals partition") {
    Rng rng(4);
    TensorD x = random_tensor<double>({1, 2, 8, 8}, rng);
    TensorD a = win::unfold_overlapping(x, OverlapSpec(4, 0.0));
    TensorD b = win::partition(x, WindowSpec::squared(4));
    CHECK(bitwise_equal(a, b));
}

TEST_CASE("overlap arithmetic") {
    OverlapSpec os(16, 0.5);
    CHECK(os.m_o == 24);
    CHECK(os.halo() == 4);
    CHECK(OverlapSpec(4, 0.5).m_o == 6);
    CHECK_THROWS_AS(OverlapSpec(4, 0.01), ShapeError); // floor(4.04) == 4, no enlargement
}

TEST_CASE("unfold windows hold the exact neighborhood") {
    // ramp image: window (1,1) of a 12x12 map with M=4, M_o=6 must equal the
    // direct slice rows 3..8 x cols 3..8
    TensorD x({1, 1, 12, 12});
    for (int64_t i = 0; i < 144; ++i) x[i] = static_cast<double>(i);
    OverlapSpec os(4, 0.5);
    TensorD w = win::unfold_overlapping(x, os);
    CHECK(w.shape() == std::vector<int64_t>{9, 1, 6, 6});
    const int64_t wi = 1 * 3 + 1; // interior window
    for (int64_t y = 0; y < 6; ++y)
        for (int64_t xx = 0; xx < 6; ++xx)
            CHECK(w.at(wi, int64_t(0), y, xx) == x.at(int64_t(0), int64_t(0), 3 + y, 3 + xx));

    // border window: halo rows outside the image are zero
    CHECK(w.at(int64_t(0), int64_t(0), int64_t(0), int64_t(0)) == 0.0);
    CHECK(w.at(int64_t(0), int64_t(0), int64_t(1), int64_t(1)) ==
          x.at(int64_t(0), int64_t(0), int64_t(0), int64_t(0)));
}

TEST_CASE("element conservation") {
    Rng rng(5);
    TensorD x = random_tensor<double>({1, 2, 8, 8}, rng, 0.5, 1.0);
    TensorD p = win::partition(x, WindowSpec::squared(4));
    CHECK(p.numel() == x.numel());
    CHECK(ops::sum_all(p) == doctest::Approx(ops::sum_all(x)).epsilon(1e-12));

    // all-ones unfold counts every in-bounds coverage; the rest is padding
    TensorD ones = TensorD::full({1, 1, 8, 8}, 1.0);
    OverlapSpec os(4, 0.5);
    TensorD u = win::unfold_overlapping(ones, os);
    int64_t covered = 0;
    for (int64_t wy = 0; wy < 2; ++wy)
        for (int64_t wx = 0; wx < 2; ++wx)
            for (int64_t y = -1; y < 5; ++y)
                for (int64_t xx = -1; xx < 5; ++xx) {
                    const int64_t sy = wy * 4 + y, sx = wx * 4 + xx;
                    if (sy >= 0 && sy < 8 && sx >= 0 && sx < 8) ++covered;
                }
    CHECK(ops::sum_all(u) == doctest::Approx(static_cast<double>(covered)).epsilon(1e-12));
}

TEST_CASE("random roundtrip sweep across kinds and shapes") {
    Rng rng(6);
    for (int iter = 0; iter < 60; ++iter) {
        const int64_t ws = 2 * (1 + rng.uniform_int(3));           // 2,4,6
        const int64_t h = ws * (1 + rng.uniform_int(4));           // multiples of ws
        const int64_t w = ws * (1 + rng.uniform_int(4));
        const int64_t c = 1 + rng.uniform_int(4);
        const bool shifted = rng.uniform_int(2) == 1;
        TensorD x = random_tensor<double>({1, c, h, w}, rng);
        WindowSpec spec;
        switch (iter % 3) {
            case 0: spec = WindowSpec::squared(ws, shifted); break;
            case 1: spec = WindowSpec::vertical_enhanced(h, ws, shifted); break;
            default: spec = WindowSpec::horizontal_enhanced(w, ws, shifted); break;
        }
        TensorD s = win::shift(x, spec);
        TensorD rt = win::unshift(win::merge(win::partition(s, spec), spec, h, w), spec);
        CHECK(bitwise_equal(rt, x));
    }
}

TEST_CASE("geometry errors") {
    Rng rng(7);
    TensorD x = random_tensor<double>({1, 1, 4, 4}, rng);
    CHECK_THROWS_AS(WindowSpec::squared(0), ShapeError);
    CHECK_THROWS_AS(win::partition(x, WindowSpec::squared(3)), ShapeError); // 4 % 3 != 0
    TensorD w = win::partition(x, WindowSpec::squared(2));
    CHECK_THROWS_AS(win::merge(w, WindowSpec::squared(2), 6, 6), ShapeError);
    CHECK_THROWS_AS(win::unfold_overlapping(x, OverlapSpec(3, 0.0)), ShapeError);
}
