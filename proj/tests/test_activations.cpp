#include <catch2/catch_amalgamated.hpp>

#include "gradkit/activations.hpp"
#include "oracles.hpp"

using namespace gradkit;

TEST_CASE("scalar activations") {
    REQUIRE(relu(-2.0) == 0.0);
    REQUIRE(relu(3.0) == 3.0);
    REQUIRE(sigmoid(0.0) == 0.5);
    // swish_1(0) = 0, swish_1(2) = 2 / (1 + e^-2)
    REQUIRE(swish(0.0) == 0.0);
    const double direct = 2.0 / (1.0 + std::exp(-2.0));
    REQUIRE(swish(2.0) == Catch::Approx(direct).epsilon(1e-15));
    REQUIRE(direct == Catch::Approx(1.76159415596).epsilon(1e-9));
}

TEST_CASE("sigmoid derivative bound attains 1/4 at zero") {
    REQUIRE(sigmoid_deriv(0.0) == 0.25);
    for (double x = -8.0; x <= 8.0; x += 0.125) {
        const double d = sigmoid_deriv(x);
        REQUIRE(d > 0.0);
        REQUIRE(d <= 0.25);
    }
}

TEST_CASE("tanh identity with sigmoid") {
    for (double x = -6.0; x <= 6.0; x += 0.25)
        REQUIRE(std::abs(tanh_act(x) - (2.0 * sigmoid(2.0 * x) - 1.0)) < 1e-12);
}

TEST_CASE("swish approaches relu as beta grows") {
    for (double x = -5.0; x <= 5.0; x += 0.01)
        REQUIRE(std::abs(swish(x, 50.0) - relu(x)) <= 0.02);
}

TEST_CASE("perceptron AND gate") {
    Tensor w = tensor_new(Shape{2}, std::vector<double>{1, 1});
    auto AND = [&](double x1, double x2) {
        return perceptron(w, -1.5, tensor_new(Shape{2}, std::vector<double>{x1, x2}));
    };
    REQUIRE(AND(0, 0) == 0);
    REQUIRE(AND(0, 1) == 0);
    REQUIRE(AND(1, 0) == 0);
    REQUIRE(AND(1, 1) == 1);

    // H(0) = 1 by definition
    Tensor z = tensor_new(Shape{2}, 0.0);
    REQUIRE(perceptron(z, 0.0, tensor_new(Shape{2}, std::vector<double>{3, -4})) == 1);

    // random hyperplane sign test
    Rng rng(21);
    for (int t = 0; t < 100; ++t) {
        Tensor wr = oracle::random_tensor(Shape{4}, rng);
        Tensor xr = oracle::random_tensor(Shape{4}, rng);
        const double b = rng.uniform(-1, 1);
        const int expect = dot(wr, xr) >= -b ? 1 : 0;
        REQUIRE(perceptron(wr, b, xr) == expect);
    }
}

TEST_CASE("softmax") {
    Tensor e = softmax(tensor_new(Shape{2}, 0.0));
    REQUIRE(e[0] == 0.5);
    REQUIRE(e[1] == 0.5);

    Tensor c = softmax(tensor_new(Shape{3}, 7.3));
    for (int i = 0; i < 3; ++i) REQUIRE(c[i] == Catch::Approx(1.0 / 3).epsilon(1e-14));

    // direct unshifted formula oracle
    Tensor x = tensor_new(Shape{3}, std::vector<double>{1, 2, 3});
    Tensor s = softmax(x);
    double z = 0.0;
    for (int i = 0; i < 3; ++i) z += std::exp(x[i]);
    for (int i = 0; i < 3; ++i) REQUIRE(std::abs(s[i] - std::exp(x[i]) / z) < 1e-12);

    // distribution property on random inputs, including a large shift
    Rng rng(22);
    for (int t = 0; t < 50; ++t) {
        Tensor r = oracle::random_tensor(Shape{5}, rng, -3, 3);
        if (t % 2) for (auto& v : r.vec()) v += 500.0;
        Tensor p = softmax(r);
        double sum = 0.0;
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            REQUIRE(p[i] > 0.0);
            REQUIRE(p[i] < 1.0);
            sum += p[i];
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("normalize") {
    Tensor pm = normalize(tensor_new(Shape{2}, std::vector<double>{1, -1}));
    REQUIRE(pm[0] == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(pm[1] == Catch::Approx(-1.0).epsilon(1e-12));

    REQUIRE_THROWS_AS(normalize(tensor_new(Shape{3}, 5.0)), DegenerateInputError);

    Rng rng(23);
    Tensor r = oracle::random_tensor(Shape{64}, rng, -4, 9);
    Tensor n = normalize(r);
    double mu = 0.0;
    for (std::int64_t i = 0; i < n.numel(); ++i) mu += n[i];
    mu /= static_cast<double>(n.numel());
    double var = 0.0;
    for (std::int64_t i = 0; i < n.numel(); ++i) var += (n[i] - mu) * (n[i] - mu);
    var /= static_cast<double>(n.numel());
    REQUIRE(std::abs(mu) < 1e-10);
    REQUIRE(std::abs(var - 1.0) < 1e-10);
}

TEST_CASE("dropout") {
    Rng rng(24);
    Tensor x = oracle::random_tensor(Shape{16}, rng);

    auto [y0, m0] = dropout(x, 0.0, rng);
    REQUIRE(max_abs_diff(y0, x) == 0.0);
    for (std::int64_t i = 0; i < m0.numel(); ++i) REQUIRE(m0[i] == 1.0);

    Rng a(77), b(77);
    Tensor big = oracle::random_tensor(Shape{100000}, rng);
    auto [ya, ma] = dropout(big, 0.5, a);
    auto [yb, mb] = dropout(big, 0.5, b);
    REQUIRE(max_abs_diff(ma, mb) == 0.0); // fixed seed -> reproducible mask

    double kept = 0.0;
    for (std::int64_t i = 0; i < ma.numel(); ++i) kept += ma[i];
    kept /= static_cast<double>(ma.numel());
    REQUIRE(kept > 0.49);
    REQUIRE(kept < 0.51);

    // kept entries are verbatim, no rescale
    for (std::int64_t i = 0; i < 1000; ++i)
        REQUIRE(ya[i] == (ma[i] == 1.0 ? big[i] : 0.0));

    REQUIRE_THROWS_AS(dropout(x, 1.0, rng), ContractError);
}

TEST_CASE("heatbath") {
    Rng rng(25);
    int pos = 0;
    for (int t = 0; t < 100000; ++t) pos += heatbath(30.0, rng) == 1 ? 1 : 0;
    REQUIRE(pos == 100000); // saturation limit

    pos = 0;
    for (int t = 0; t < 100000; ++t) pos += heatbath(0.0, rng) == 1 ? 1 : 0;
    const double freq = pos / 100000.0;
    REQUIRE(freq > 0.49);
    REQUIRE(freq < 0.51);

    Rng a(5), b(5);
    for (int t = 0; t < 1000; ++t) REQUIRE(heatbath(0.3, a) == heatbath(0.3, b));
}

TEST_CASE("maxpool over index sets") {
    Tensor x = tensor_new(Shape{4}, std::vector<double>{1, 5, 3, 2});
    Tensor y = maxpool_sets(x, {{0, 1}, {2, 3}, {0, 3}});
    REQUIRE(y[0] == 5.0);
    REQUIRE(y[1] == 3.0);
    REQUIRE(y[2] == 2.0);
    REQUIRE_THROWS_AS(maxpool_sets(x, {{}}), ShapeError);
}
