#include <catch2/catch_amalgamated.hpp>

#include "gradkit/activations.hpp"
#include "gradkit/gcnn.hpp"
#include "gradkit/tropical.hpp"
#include "oracles.hpp"

using namespace gradkit;

TEST_CASE("semiring identities and annihilation") {
    Rng rng(100);
    for (int t = 0; t < 100; ++t) {
        const double a = rng.uniform(-5, 5);
        REQUIRE(trop_add(a, kTropZero) == a);
        REQUIRE(trop_mul(a, kTropOne) == a);
        REQUIRE(trop_mul(a, kTropZero) == kTropZero);
        REQUIRE(trop_add(a, a) == a); // idempotent
    }
}

TEST_CASE("semiring axioms on random triples, exact") {
    Rng rng(101);
    for (int t = 0; t < 10000; ++t) {
        const double a = rng.uniform(-9, 9), b = rng.uniform(-9, 9), c = rng.uniform(-9, 9);
        REQUIRE(trop_add(trop_add(a, b), c) == trop_add(a, trop_add(b, c)));
        REQUIRE(trop_add(a, b) == trop_add(b, a));
        REQUIRE(trop_mul(a, b) == trop_mul(b, a));
        // multiplication associativity holds on these operands up to rounding;
        // with one shared addend reassociation the check below is exact because
        // max picks one of the two identical sums
        REQUIRE(trop_mul(a, trop_add(b, c)) == trop_add(trop_mul(a, b), trop_mul(a, c)));
    }
}

TEST_CASE("flat 2x2 kernel at stride 2 is max pooling, bit for bit") {
    Rng rng(102);
    for (int t = 0; t < 25; ++t) {
        Tensor f = oracle::random_tensor(Shape{6, 8}, rng, -4, 4);
        Tensor flat = Tensor::full(Shape{2, 2}, 0.0);
        REQUIRE(max_abs_diff(morph_conv2d(flat, f, 2), maxpool2d(f, 2)) == 0.0);
    }
}

TEST_CASE("tropical delta kernel is the identity crop") {
    Rng rng(103);
    Tensor f = oracle::random_tensor(Shape{5, 5}, rng);
    Tensor delta = Tensor::full(Shape{3, 3}, kTropZero);
    delta.at(1, 1) = 0.0; // the tropical multiplicative unit
    Tensor out = morph_conv2d(delta, f, 1);
    REQUIRE(out.shape() == Shape{3, 3});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) REQUIRE(out.at(i, j) == f.at(i + 1, j + 1));
}

TEST_CASE("morph_conv2d against the double-loop oracle") {
    Rng rng(104);
    for (int t = 0; t < 20; ++t) {
        Tensor k = oracle::random_tensor(Shape{3, 3}, rng, -2, 2);
        if (t % 3 == 0) k.at(0, 2) = kTropZero; // some -inf positions
        Tensor f = oracle::random_tensor(Shape{7, 6}, rng, -3, 3);
        const int stride = 1 + t % 2;
        REQUIRE(max_abs_diff(morph_conv2d(k, f, stride),
                             oracle::morph_conv2d_loops(k, f, stride)) == 0.0);
    }

    Tensor improper = Tensor::full(Shape{2, 2}, kTropZero);
    Tensor f = Tensor::zeros(Shape{4, 4});
    REQUIRE_THROWS_AS(morph_conv2d(improper, f, 1), ContractError);
}

TEST_CASE("tropical map property of morph_conv2d") {
    // T(c.f (+) d.f') = c.Tf (+) d.Tf', exactly
    Rng rng(105);
    Tensor k = oracle::random_tensor(Shape{2, 2}, rng, -1, 1);
    Tensor f1 = oracle::random_tensor(Shape{5, 5}, rng, -2, 2);
    Tensor f2 = oracle::random_tensor(Shape{5, 5}, rng, -2, 2);
    const double c = 0.75, d = -1.25;
    Tensor combo = Tensor::zeros(Shape{5, 5});
    for (std::int64_t i = 0; i < combo.numel(); ++i)
        combo[i] = trop_add(trop_mul(c, f1[i]), trop_mul(d, f2[i]));
    Tensor lhs = morph_conv2d(k, combo, 1);
    Tensor t1 = morph_conv2d(k, f1, 1);
    Tensor t2 = morph_conv2d(k, f2, 1);
    for (std::int64_t i = 0; i < lhs.numel(); ++i)
        REQUIRE(lhs[i] == trop_add(trop_mul(c, t1[i]), trop_mul(d, t2[i])));
}

TEST_CASE("normalized kernels are sup-norm contractions") {
    Rng rng(106);
    for (int t = 0; t < 1000; ++t) {
        Tensor k = oracle::random_tensor(Shape{3, 3}, rng, -3, 0);
        k[static_cast<std::int64_t>(rng.below(9))] = 0.0; // max entry 0
        Tensor f = oracle::random_tensor(Shape{6, 6}, rng, -5, 5);
        Tensor out = morph_conv2d(k, f, 1);
        double fmax = 0.0, omax = 0.0;
        for (std::int64_t i = 0; i < f.numel(); ++i) fmax = std::max(fmax, std::abs(f[i]));
        for (std::int64_t i = 0; i < out.numel(); ++i) omax = std::max(omax, std::abs(out[i]));
        REQUIRE(omax <= fmax);
    }
}

TEST_CASE("translation equivariance at stride 1") {
    Rng rng(107);
    Tensor k = oracle::random_tensor(Shape{3, 3}, rng, -1, 1);
    Tensor f = oracle::random_tensor(Shape{8, 8}, rng, -2, 2);
    // shift the input down-right by one, compare interior of the outputs
    Tensor shifted = Tensor::zeros(Shape{8, 8});
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) shifted.at(i + 1, j + 1) = f.at(i, j);
    Tensor a = morph_conv2d(k, f, 1);       // 6x6
    Tensor b = morph_conv2d(k, shifted, 1); // 6x6
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) REQUIRE(b.at(i + 1, j + 1) == a.at(i, j));
}

TEST_CASE("tropical relu construction equals relu") {
    Tensor x = tensor_new(Shape{2}, std::vector<double>{-1, 2});
    Tensor y = trop_relu_identity(x);
    REQUIRE(y[0] == 0.0);
    REQUIRE(y[1] == 2.0);

    Tensor neg = tensor_new(Shape{3}, std::vector<double>{-3, -1, -2});
    Tensor yn = trop_relu_identity(neg);
    for (int i = 0; i < 3; ++i) REQUIRE(yn[i] == 0.0);

    Rng rng(108);
    for (int t = 0; t < 50; ++t) {
        Tensor f = oracle::random_tensor(Shape{17}, rng, -4, 4);
        Tensor lhs = trop_relu_identity(f);
        Tensor rhs = scalar_act(ScalarAct::Relu, f);
        REQUIRE(max_abs_diff(lhs, rhs) == 0.0);
    }
}

TEST_CASE("morph_conv_se2") {
    Rng rng(109);
    const int K = 4, H = 5, W = 5, m = 3;

    // tropical delta: identity
    Tensor delta = Tensor::full(Shape{K, m, m}, kTropZero);
    delta.at(0, 1, 1) = 0.0;
    Tensor f = oracle::random_tensor(Shape{K, H, W}, rng, -2, 2);
    REQUIRE(max_abs_diff(morph_conv_se2(delta, f), f) == 0.0);

    // flat 0 kernel whose window covers the whole frame: global max everywhere
    const int big = 2 * H - 1;
    Tensor flat = Tensor::full(Shape{K, big, big}, 0.0);
    Tensor g = morph_conv_se2(flat, f);
    double gmax = f[0];
    for (std::int64_t i = 0; i < f.numel(); ++i) gmax = std::max(gmax, f[i]);
    for (std::int64_t i = 0; i < g.numel(); ++i) REQUIRE(g[i] == gmax);

    // quarter-turn equivariance, exact up to max reordering (which is exact)
    Tensor kappa = oracle::random_tensor(Shape{K, m, m}, rng, -1, 1);
    const SE2Element q(0, 0, kTwoPi / 4);
    Tensor lhs = morph_conv_se2(kappa, rotate_stack(q, f));
    Tensor rhs = rotate_stack(q, morph_conv_se2(kappa, f));
    REQUIRE(max_abs_diff(lhs, rhs) == 0.0);
}
