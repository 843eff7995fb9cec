#pragma once

#include <cmath>
#include <functional>

#include "gradkit/activations.hpp"
#include "gradkit/layers.hpp"
#include "gradkit/rng.hpp"
#include "gradkit/tensor.hpp"

namespace gradkit {

enum class InitKind {
    SigmoidBalanced,    // Var = 16/n, biases fixed to 0
    ReluBalancedUniform, // Unif[-sqrt(6/n), sqrt(6/n)] for weights and biases
    Xavier,              // Var = 2/(n+m), biases 0
    Gain,                // Var = gain^2 * 2/(n+m), biases 0
};

enum class InitDist { Normal, Uniform };

struct InitScheme {
    InitKind kind = InitKind::Xavier;
    int fan_in = 1;
    int fan_out = 1;
    double gain = 1.0;
    InitDist dist = InitDist::Normal;

    static InitScheme sigmoid_balanced(int n, InitDist d = InitDist::Normal) {
        return {InitKind::SigmoidBalanced, n, n, 1.0, d};
    }
    static InitScheme relu_balanced_uniform(int n) {
        return {InitKind::ReluBalancedUniform, n, n, 1.0, InitDist::Uniform};
    }
    static InitScheme xavier(int n, int m, InitDist d = InitDist::Normal) {
        return {InitKind::Xavier, n, m, 1.0, d};
    }
    static InitScheme with_gain(double g, int n, int m, InitDist d = InitDist::Normal) {
        return {InitKind::Gain, n, m, g, d};
    }
    /// He scheme for ReLU layers: gain sqrt(2), i.e. Var = 4/(n+m).
    static InitScheme he(int n, int m, InitDist d = InitDist::Normal) {
        return with_gain(std::sqrt(2.0), n, m, d);
    }
};

/// Target weight variance of a scheme.
inline double scheme_variance(const InitScheme& s) {
    switch (s.kind) {
        case InitKind::SigmoidBalanced: return 16.0 / s.fan_in;
        case InitKind::ReluBalancedUniform: return 2.0 / s.fan_in; // Unif bound sqrt(6/n)
        case InitKind::Xavier: return 2.0 / (s.fan_in + s.fan_out);
        case InitKind::Gain: return s.gain * s.gain * 2.0 / (s.fan_in + s.fan_out);
    }
    return 0.0;
}

/// Whether the scheme also draws biases (only the balanced-ReLU example does;
/// the others pin biases to zero).
inline bool scheme_samples_biases(const InitScheme& s) {
    return s.kind == InitKind::ReluBalancedUniform;
}

/// Zero-mean samples with the scheme's variance; uniform draws use the bound
/// a = sqrt(3 Var) and never exceed it.
inline Tensor sample_params(const InitScheme& s, Shape shape, Rng& rng) {
    const double var = scheme_variance(s);
    Tensor out = Tensor::zeros(std::move(shape));
    if (s.dist == InitDist::Normal) {
        const double sd = std::sqrt(var);
        for (auto& v : out.vec()) v = sd * rng.normal();
    } else {
        const double a = std::sqrt(3.0 * var);
        for (auto& v : out.vec()) v = rng.uniform(-a, a);
    }
    return out;
}

/// Monte-Carlo estimate of the layer's signal "variance" gain
/// sum_i E[Y_i^2] / sum_j E[X_j^2] under i.i.d. zero-mean inputs. Uncentered
/// second moments are used: that is the quantity the balanced-signal
/// derivations propagate (the ReLU halves E[Y^2], which the sqrt(2) gain then
/// restores; the centered variance of a rectified signal would not come back
/// to 1 under any gain).
inline double signal_variance_probe(const DenseLayer& layer, double input_var, int trials,
                                    Rng& rng) {
    if (trials < 1000) throw ContractError("signal_variance_probe: need at least 1000 trials");
    const int n = layer.A.dim(1);
    const double sd = std::sqrt(input_var);
    double sum_y2 = 0.0, sum_x2 = 0.0;
    Tensor x = Tensor::zeros(Shape{n});
    for (int t = 0; t < trials; ++t) {
        for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = sd * rng.normal();
        const Tensor y = layer.forward(x);
        for (std::int64_t i = 0; i < x.numel(); ++i) sum_x2 += x[i] * x[i];
        for (std::int64_t i = 0; i < y.numel(); ++i) sum_y2 += y[i] * y[i];
    }
    if (sum_x2 == 0.0) throw NumericError("signal_variance_probe: degenerate input");
    return sum_y2 / sum_x2;
}

} // namespace gradkit
