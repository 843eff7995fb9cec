#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gradkit/activations.hpp"
#include "gradkit/conv.hpp"
#include "gradkit/tensor.hpp"

namespace gradkit {

/// Affine layer y = act(A x + b).
struct DenseLayer {
    Tensor A;        // m x n
    Tensor b;        // m
    ScalarAct act = ScalarAct::Relu;

    Tensor forward(const Tensor& x) const {
        Tensor y = matmul(A, x);
        for (std::int64_t i = 0; i < y.numel(); ++i) y[i] += b[i];
        return scalar_act(act, y);
    }
};

enum class ConvMode { SCC, MCC };

/// Convolution layer description. SCC keeps one kernel per input channel
/// plus a pointwise mix matrix; MCC keeps a kernel per channel pair.
struct Conv2DLayer {
    ConvMode mode = ConvMode::SCC;
    Tensor kernels; // SCC: C x m x m, MCC: C' x C x m x m
    Tensor mix;     // SCC only: C' x C
    Tensor bias;    // C'
    PadSpec pad;

    int kernel_size() const { return kernels.dim(mode == ConvMode::SCC ? 1 : 2); }

    std::int64_t param_count(bool with_bias = false) const {
        if (mode == ConvMode::SCC)
            return scc_param_count(kernels.dim(0), mix.dim(0), kernel_size(), with_bias);
        return mcc_param_count(kernels.dim(1), kernels.dim(0), kernel_size(), with_bias);
    }

    Tensor forward(const Tensor& f) const {
        const Tensor fin = pad.none() ? f : zero_pad2d(f, pad);
        if (mode == ConvMode::SCC) return scc_forward(fin, kernels, mix, bias);
        return mcc_forward(fin, kernels, bias);
    }
};

/// The MCC layer computing the exact same map as a given SCC layer
/// (k'[c',c] = A[c',c] k[c]).
inline Conv2DLayer scc_to_mcc(const Conv2DLayer& scc) {
    if (scc.mode != ConvMode::SCC) throw ContractError("scc_to_mcc: layer is not SCC");
    Conv2DLayer out;
    out.mode = ConvMode::MCC;
    out.kernels = scc_to_mcc_kernels(scc.kernels, scc.mix);
    out.bias = scc.bias;
    out.pad = scc.pad;
    return out;
}

/// Piecewise linear function on [0,1]: breakpoints 0 = b_1 < ... < b_{N+1} = 1,
/// slope alpha_i on [b_i, b_{i+1}], value f(0) at the left end.
struct PiecewiseLinear {
    std::vector<double> breakpoints; // N+1 entries, first 0, last 1
    std::vector<double> slopes;      // N entries
    double value_at_0 = 0.0;

    int pieces() const { return static_cast<int>(slopes.size()); }

    void validate() const {
        const int N = pieces();
        if (N < 1 || static_cast<int>(breakpoints.size()) != N + 1)
            throw ContractError("piecewise linear: need N slopes and N+1 breakpoints");
        if (breakpoints.front() != 0.0 || breakpoints.back() != 1.0)
            throw ContractError("piecewise linear: breakpoints must span [0,1]");
        for (int i = 0; i + 1 <= N; ++i)
            if (!(breakpoints[i] < breakpoints[i + 1]))
                throw ContractError("piecewise linear: breakpoints must strictly increase");
    }

    double eval(double x) const {
        double y = value_at_0;
        for (std::size_t i = 0; i < slopes.size(); ++i) {
            const double lo = breakpoints[i], hi = breakpoints[i + 1];
            if (x <= lo) break;
            y += slopes[i] * (std::min(x, hi) - lo);
        }
        return y;
    }
};

/// Shallow scalar ReLU network F(x) = sum_i c_i relu(a_i x + b_i).
struct ShallowReluNet {
    std::vector<double> a, b, c;

    double eval(double x) const {
        double y = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) y += c[i] * relu(a[i] * x + b[i]);
        return y;
    }
};

/// Exact shallow-network representation of a piecewise linear function:
/// N+1 neurons with a_i = 1, b_i = -beta_i, c_1 = alpha_1,
/// c_i = alpha_i - alpha_{i-1}, and one constant neuron (a=0, b=1)
/// carrying f(0).
inline ShallowReluNet pwl_to_shallow(const PiecewiseLinear& p) {
    p.validate();
    const int N = p.pieces();
    ShallowReluNet net;
    net.a.assign(static_cast<std::size_t>(N) + 1, 1.0);
    net.b.resize(static_cast<std::size_t>(N) + 1);
    net.c.resize(static_cast<std::size_t>(N) + 1);
    for (int i = 0; i < N; ++i) {
        net.b[static_cast<std::size_t>(i)] = -p.breakpoints[static_cast<std::size_t>(i)];
        net.c[static_cast<std::size_t>(i)] =
            i == 0 ? p.slopes[0]
                   : p.slopes[static_cast<std::size_t>(i)] - p.slopes[static_cast<std::size_t>(i) - 1];
    }
    net.a[static_cast<std::size_t>(N)] = 0.0;
    net.b[static_cast<std::size_t>(N)] = 1.0;
    net.c[static_cast<std::size_t>(N)] = p.value_at_0;
    return net;
}

/// Linear interpolant of f at the knots i/N; for L-Lipschitz f the sup error
/// is at most L/N.
inline PiecewiseLinear pwl_approximant(const std::function<double(double)>& f, int N) {
    if (N < 1) throw ContractError("pwl_approximant: N must be >= 1");
    PiecewiseLinear p;
    p.value_at_0 = f(0.0);
    p.breakpoints.resize(static_cast<std::size_t>(N) + 1);
    p.slopes.resize(static_cast<std::size_t>(N));
    double prev = p.value_at_0;
    for (int i = 0; i <= N; ++i)
        p.breakpoints[static_cast<std::size_t>(i)] = static_cast<double>(i) / N;
    for (int i = 1; i <= N; ++i) {
        const double fi = f(static_cast<double>(i) / N);
        p.slopes[static_cast<std::size_t>(i) - 1] = (fi - prev) * N;
        prev = fi;
    }
    return p;
}

/// One sawtooth tooth, f(x) = relu(2x) - relu(4x-2) + relu(2x-2), and its
/// k-fold composition; each application doubles the number of teeth.
inline double sawtooth(double x) { return relu(2.0 * x) - relu(4.0 * x - 2.0) + relu(2.0 * x - 2.0); }

inline std::function<double(double)> sawtooth_compose(int k) {
    if (k < 1) throw ContractError("sawtooth_compose: k must be >= 1");
    return [k](double x) {
        for (int i = 0; i < k; ++i) x = sawtooth(x);
        return x;
    };
}

} // namespace gradkit
