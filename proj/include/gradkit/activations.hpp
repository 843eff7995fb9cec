#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "gradkit/rng.hpp"
#include "gradkit/tensor.hpp"

namespace gradkit {

// Scalar activations. relu'(0) is taken as 1 (the indicator 1_{t>=0});
// some frameworks use 0 there, this library standardizes on 1.

inline double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_deriv(double x) { return x >= 0.0 ? 1.0 : 0.0; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double sigmoid_deriv(double x) {
    const double s = sigmoid(x);
    return s * (1.0 - s);
}

inline double tanh_act(double x) { return std::tanh(x); }
inline double tanh_deriv(double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
}

/// swish_beta(x) = x * sigmoid(beta x); beta=1 is the SiLU.
inline double swish(double x, double beta = 1.0) { return x * sigmoid(beta * x); }
inline double swish_deriv(double x, double beta = 1.0) {
    const double s = sigmoid(beta * x);
    return s + x * beta * s * (1.0 - s);
}

enum class ScalarAct { Heaviside, Relu, Sigmoid, Tanh, Swish };

inline double scalar_act(ScalarAct kind, double x, double beta = 1.0) {
    switch (kind) {
        case ScalarAct::Heaviside: return heaviside(x);
        case ScalarAct::Relu: return relu(x);
        case ScalarAct::Sigmoid: return sigmoid(x);
        case ScalarAct::Tanh: return tanh_act(x);
        case ScalarAct::Swish: return swish(x, beta);
    }
    return 0.0;
}

/// Pointwise application to a tensor (the paper's vector abuse of notation).
inline Tensor scalar_act(ScalarAct kind, const Tensor& x, double beta = 1.0) {
    Tensor out = x;
    for (auto& v : out.vec()) v = scalar_act(kind, v, beta);
    return out;
}

/// Perceptron H(w.x + b): a linear binary classifier; H(0)=1.
inline int perceptron(const Tensor& w, double b, const Tensor& x) {
    if (w.shape() != x.shape()) throw ShapeError("perceptron: w and x shapes differ");
    return heaviside(dot(w, x) + b) > 0.5 ? 1 : 0;
}

/// Shift-invariant softmax: subtracts the max before exponentiation so large
/// logits cannot overflow, result unchanged mathematically.
inline Tensor softmax(const Tensor& x) {
    Tensor out = x;
    double m = x[0];
    for (std::int64_t i = 1; i < x.numel(); ++i) m = std::max(m, x[i]);
    double z = 0.0;
    for (auto& v : out.vec()) {
        v = std::exp(v - m);
        z += v;
    }
    for (auto& v : out.vec()) v /= z;
    return out;
}

constexpr double kNormalizeVarEps = 1e-12;

/// Re-center and re-scale to mean 0, variance 1 (population variance over
/// the whole tensor; the n-1 correction is deliberately not applied).
inline Tensor normalize(const Tensor& x) {
    const std::int64_t n = x.numel();
    if (n < 2) throw ShapeError("normalize needs at least 2 elements");
    double mu = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mu += x[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= static_cast<double>(n);
    if (var <= kNormalizeVarEps) throw DegenerateInputError("normalize: variance below eps");
    const double inv = 1.0 / std::sqrt(var);
    Tensor out = x;
    for (auto& v : out.vec()) v = (v - mu) * inv;
    return out;
}

/// Maxpool over explicit index sets I_s (each must be nonempty and in range).
inline Tensor maxpool_sets(const Tensor& x, const std::vector<std::vector<int>>& sets) {
    if (sets.empty()) throw ShapeError("maxpool_sets: no index sets");
    Tensor out = Tensor::zeros(Shape{static_cast<int>(sets.size())});
    for (std::size_t s = 0; s < sets.size(); ++s) {
        if (sets[s].empty()) throw ShapeError("maxpool_sets: empty index set");
        double m = x[sets[s][0]];
        for (std::size_t j = 1; j < sets[s].size(); ++j) m = std::max(m, x[sets[s][j]]);
        out[static_cast<std::int64_t>(s)] = m;
    }
    return out;
}

/// Dropout exactly as defined in the module contract: entries zeroed with
/// probability p, kept verbatim otherwise. No 1/(1-p) rescaling.
/// Returns (output, keep mask) so a backward pass can reuse the mask.
inline std::pair<Tensor, Tensor> dropout(const Tensor& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0,1)");
    Tensor out = x;
    Tensor mask = Tensor::full(x.shape(), 1.0);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        if (rng.uniform01() < p) {
            out[i] = 0.0;
            mask[i] = 0.0;
        }
    }
    return {out, mask};
}

/// Stochastic binary unit: +1 with probability sigmoid(lambda), else -1.
/// Forward-only; carries no backward rule by design.
inline int heatbath(double lambda, Rng& rng) {
    return rng.uniform01() < sigmoid(lambda) ? +1 : -1;
}

} // namespace gradkit
