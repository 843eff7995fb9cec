#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gradkit/tensor.hpp"

namespace gradkit {

enum class OptKind { Sgd, Momentum, Adagrad, RmsProp, Adam };

inline OptKind opt_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptKind::Sgd;
    if (s == "momentum") return OptKind::Momentum;
    if (s == "adagrad") return OptKind::Adagrad;
    if (s == "rmsprop") return OptKind::RmsProp;
    if (s == "adam") return OptKind::Adam;
    throw ContractError("unknown optimizer '" + s + "'");
}

/// Per-parameter update rules, all component-wise. Auxiliary buffers mirror
/// the parameter shapes and start at zero; the step counter t starts at 0 and
/// is incremented before Adam's bias correction, so corrections divide by
/// 1 - beta^t with t >= 1.
struct OptimizerState {
    OptKind kind = OptKind::Sgd;
    double lr = 0.001;
    double mu = 0.9;       // momentum coefficient
    double alpha = 0.9;    // RMSProp forgetting factor
    double beta1 = 0.9;    // Adam first-moment decay
    double beta2 = 0.99;   // Adam second-moment decay (paper default)
    double eps = 1e-8;
    long long t = 0;

    std::vector<Tensor> v;   // velocity / EMA of g^2 (rmsprop) / adagrad accumulator
    std::vector<Tensor> m;   // adam first moment

    void validate() const {
        if (!(lr > 0.0)) throw ContractError("optimizer: lr must be > 0");
        if (!(eps > 0.0)) throw ContractError("optimizer: eps must be > 0");
        if (kind == OptKind::Momentum && (mu < 0.0 || mu >= 1.0))
            throw ContractError("optimizer: mu must be in [0,1)");
        if (kind == OptKind::RmsProp && (alpha <= 0.0 || alpha >= 1.0))
            throw ContractError("optimizer: alpha must be in (0,1)");
        if (kind == OptKind::Adam &&
            (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0))
            throw ContractError("optimizer: betas must be in (0,1)");
    }

    void ensure_buffers(const std::vector<Tensor>& w) {
        auto match = [&](std::vector<Tensor>& buf) {
            if (buf.size() == w.size()) return;
            buf.clear();
            for (const Tensor& t_ : w) buf.push_back(Tensor::zeros(t_.shape()));
        };
        switch (kind) {
            case OptKind::Sgd: break;
            case OptKind::Momentum:
            case OptKind::Adagrad:
            case OptKind::RmsProp: match(v); break;
            case OptKind::Adam:
                match(v);
                match(m);
                break;
        }
    }

    /// One update over a flat ordered parameter list; gradients pair
    /// positionally.
    void step(std::vector<Tensor>& w, const std::vector<Tensor>& g) {
        validate();
        if (w.size() != g.size()) throw ShapeError("optimizer step: parameter/gradient count differ");
        ensure_buffers(w);
        ++t;
        for (std::size_t p = 0; p < w.size(); ++p) {
            if (w[p].shape() != g[p].shape())
                throw ShapeError("optimizer step: shape mismatch at parameter " + std::to_string(p));
            double* wp = w[p].data();
            const double* gp = g[p].data();
            const std::int64_t n = w[p].numel();
            switch (kind) {
                case OptKind::Sgd:
                    for (std::int64_t i = 0; i < n; ++i) wp[i] -= lr * gp[i];
                    break;
                case OptKind::Momentum: {
                    double* vp = v[p].data();
                    for (std::int64_t i = 0; i < n; ++i) {
                        vp[i] = mu * vp[i] - lr * gp[i];
                        wp[i] += vp[i];
                    }
                    break;
                }
                case OptKind::Adagrad: {
                    double* ap = v[p].data();
                    for (std::int64_t i = 0; i < n; ++i) {
                        ap[i] += gp[i] * gp[i];
                        wp[i] -= lr * gp[i] / (std::sqrt(ap[i]) + eps);
                    }
                    break;
                }
                case OptKind::RmsProp: {
                    double* vp = v[p].data();
                    for (std::int64_t i = 0; i < n; ++i) {
                        vp[i] = alpha * vp[i] + (1.0 - alpha) * gp[i] * gp[i];
                        wp[i] -= lr * gp[i] / (std::sqrt(vp[i]) + eps);
                    }
                    break;
                }
                case OptKind::Adam: {
                    double* mp = m[p].data();
                    double* vp = v[p].data();
                    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
                    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
                    for (std::int64_t i = 0; i < n; ++i) {
                        mp[i] = beta1 * mp[i] + (1.0 - beta1) * gp[i];
                        vp[i] = beta2 * vp[i] + (1.0 - beta2) * gp[i] * gp[i];
                        const double mhat = mp[i] / c1;
                        const double vhat = vp[i] / c2;
                        wp[i] -= lr * mhat / (std::sqrt(vhat) + eps);
                    }
                    break;
                }
            }
        }
    }
};

// Single-tensor convenience steps matching the per-operation contracts.

inline Tensor sgd_step(OptimizerState& s, const Tensor& w, const Tensor& g) {
    std::vector<Tensor> wv{w};
    s.step(wv, {g});
    return wv[0];
}

inline Tensor momentum_step(OptimizerState& s, const Tensor& w, const Tensor& g) {
    return sgd_step(s, w, g);
}
inline Tensor adagrad_step(OptimizerState& s, const Tensor& w, const Tensor& g) {
    return sgd_step(s, w, g);
}
inline Tensor rmsprop_step(OptimizerState& s, const Tensor& w, const Tensor& g) {
    return sgd_step(s, w, g);
}
inline Tensor adam_step(OptimizerState& s, const Tensor& w, const Tensor& g) {
    return sgd_step(s, w, g);
}

inline OptimizerState make_optimizer(OptKind kind, double lr) {
    OptimizerState s;
    s.kind = kind;
    s.lr = lr;
    return s;
}

} // namespace gradkit
