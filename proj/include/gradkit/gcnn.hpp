#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gradkit/activations.hpp"
#include "gradkit/conv.hpp"
#include "gradkit/rng.hpp"
#include "gradkit/se2.hpp"

namespace gradkit {

struct LiftGrads {
    Tensor f, kernels, mix, bias;
};

/// Lifting layer, single-channel mode: for each orientation theta_k the
/// per-channel kernels are rotated and cross-correlated over the same-padded
/// input, then mixed pointwise.
///   out[c',k] = sum_c mix[c',c] (rot_k(kappa[c]) ⋆ pad(f[c])) + bias[c']
/// Output: C' x K x H x W. Activation is applied by the caller.
/// corr_out, if given, receives the C x K x H x W correlation maps.
inline Tensor lift_forward(const Tensor& f, const Tensor& kernels, const Tensor& mix,
                           const Tensor& bias, int K, Tensor* corr_out = nullptr) {
    if (f.rank() != 3 || kernels.rank() != 3)
        throw ShapeError("lift_forward expects C x H x W input and C x m x m kernels");
    const int C = f.dim(0), H = f.dim(1), W = f.dim(2);
    if (kernels.dim(0) != C) throw ShapeError("lift_forward: channel counts disagree");
    const int m = kernels.dim(1);
    if (kernels.dim(2) != m) throw ShapeError("lift_forward: kernels must be square");
    if (m % 2 == 0) throw ContractError("lift_forward: kernel size must be odd");
    if (mix.rank() != 2 || mix.dim(1) != C) throw ShapeError("lift_forward: mix must be C' x C");
    const int Cp = mix.dim(0);
    if (bias.numel() != Cp) throw ShapeError("lift_forward: bias must have C' entries");
    if (K < 1) throw ContractError("lift_forward: K must be >= 1");

    const PadSpec pad = PadSpec::same(m);
    const Tensor fp = zero_pad2d(f, pad);
    const int ph = fp.dim(1), pw = fp.dim(2);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;

    Tensor corr = Tensor::zeros(Shape{C, K, H, W});
    std::vector<double> rk(static_cast<std::size_t>(m) * m);
    for (int k = 0; k < K; ++k) {
        const KernelRotator rot(m, theta_of(k, K));
        for (int c = 0; c < C; ++c) {
            rot.apply(kernels.data() + static_cast<std::int64_t>(c) * m * m, rk.data());
            detail::xcorr2d_acc(corr.data() + (static_cast<std::int64_t>(c) * K + k) * plane,
                                rk.data(), m, fp.data() + static_cast<std::int64_t>(c) * ph * pw,
                                ph, pw);
        }
    }

    Tensor out = Tensor::zeros(Shape{Cp, K, H, W});
    for (int cp = 0; cp < Cp; ++cp) {
        for (int k = 0; k < K; ++k) {
            double* o = out.data() + (static_cast<std::int64_t>(cp) * K + k) * plane;
            for (int c = 0; c < C; ++c) {
                const double a = mix.at(cp, c);
                if (a == 0.0) continue;
                const double* s = corr.data() + (static_cast<std::int64_t>(c) * K + k) * plane;
                for (std::int64_t i = 0; i < plane; ++i) o[i] += a * s[i];
            }
            const double b = bias[cp];
            for (std::int64_t i = 0; i < plane; ++i) o[i] += b;
        }
    }
    if (corr_out) *corr_out = std::move(corr);
    return out;
}

inline LiftGrads lift_backward(const Tensor& f, const Tensor& kernels, const Tensor& mix,
                               const Tensor& corr, const Tensor& outgrad, int K) {
    const int C = f.dim(0), H = f.dim(1), W = f.dim(2);
    const int m = kernels.dim(1);
    const int Cp = mix.dim(0);
    const PadSpec pad = PadSpec::same(m);
    const Tensor fp = zero_pad2d(f, pad);
    const int ph = fp.dim(1), pw = fp.dim(2);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;

    LiftGrads g;
    g.kernels = Tensor::zeros(kernels.shape());
    g.mix = Tensor::zeros(mix.shape());
    g.bias = Tensor::zeros(Shape{Cp});
    Tensor fpbar = Tensor::zeros(fp.shape());

    std::vector<double> u(static_cast<std::size_t>(plane));
    std::vector<double> rk(static_cast<std::size_t>(m) * m);
    std::vector<double> kb(static_cast<std::size_t>(m) * m);

    for (int k = 0; k < K; ++k) {
        const KernelRotator rot(m, theta_of(k, K));
        for (int c = 0; c < C; ++c) {
            // U[c,k] = sum_c' mix[c',c] * outgrad[c',k]
            std::fill(u.begin(), u.end(), 0.0);
            for (int cp = 0; cp < Cp; ++cp) {
                const double a = mix.at(cp, c);
                if (a == 0.0) continue;
                const double* og = outgrad.data() + (static_cast<std::int64_t>(cp) * K + k) * plane;
                for (std::int64_t i = 0; i < plane; ++i) u[static_cast<std::size_t>(i)] += a * og[i];
            }
            // rotated-kernel gradient, pulled back through the rotation
            std::fill(kb.begin(), kb.end(), 0.0);
            detail::xcorr2d_kernel_grad_acc(kb.data(), m,
                                            fp.data() + static_cast<std::int64_t>(c) * ph * pw, ph,
                                            pw, u.data());
            rot.apply_adjoint(kb.data(), g.kernels.data() + static_cast<std::int64_t>(c) * m * m);
            // input gradient
            rot.apply(kernels.data() + static_cast<std::int64_t>(c) * m * m, rk.data());
            detail::xcorr2d_input_grad_acc(fpbar.data() + static_cast<std::int64_t>(c) * ph * pw,
                                           rk.data(), m, u.data(), H, W, pw);
        }
    }
    for (int cp = 0; cp < Cp; ++cp) {
        double bsum = 0.0;
        for (int k = 0; k < K; ++k) {
            const double* og = outgrad.data() + (static_cast<std::int64_t>(cp) * K + k) * plane;
            for (std::int64_t i = 0; i < plane; ++i) bsum += og[i];
            for (int c = 0; c < C; ++c) {
                const double* s = corr.data() + (static_cast<std::int64_t>(c) * K + k) * plane;
                double acc = 0.0;
                for (std::int64_t i = 0; i < plane; ++i) acc += og[i] * s[i];
                g.mix.at(cp, c) += acc;
            }
        }
        g.bias[cp] = bsum;
    }
    g.f = crop2d(fpbar, pad);
    return g;
}

/// Group convolution layer on discretized SE(2), single-channel mode.
/// The kernel has K_k angular taps (K_k == K is full support; smaller values
/// are zero-extended cyclically):
///   out[c',k] = sum_c mix[c',c] sum_{k'} rot_k(kappa[c,(k'-k) mod K]) ⋆ pad(f[c,k']) + bias[c']
inline Tensor gconv_forward(const Tensor& f, const Tensor& kernels, const Tensor& mix,
                            const Tensor& bias, Tensor* corr_out = nullptr) {
    if (f.rank() != 4 || kernels.rank() != 4)
        throw ShapeError("gconv_forward expects C x K x H x W input and C x K_k x m x m kernels");
    const int C = f.dim(0), K = f.dim(1), H = f.dim(2), W = f.dim(3);
    if (kernels.dim(0) != C) throw ShapeError("gconv_forward: channel counts disagree");
    const int Kk = kernels.dim(1);
    if (Kk > K) throw ShapeError("gconv_forward: more angular taps than orientations");
    const int m = kernels.dim(2);
    if (kernels.dim(3) != m) throw ShapeError("gconv_forward: kernels must be square");
    if (m % 2 == 0) throw ContractError("gconv_forward: kernel size must be odd");
    if (mix.rank() != 2 || mix.dim(1) != C) throw ShapeError("gconv_forward: mix must be C' x C");
    const int Cp = mix.dim(0);
    if (bias.numel() != Cp) throw ShapeError("gconv_forward: bias must have C' entries");

    const PadSpec pad = PadSpec::same(m);
    const Tensor fp = zero_pad2d(f, pad);
    const int ph = fp.dim(2), pw = fp.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t pplane = static_cast<std::int64_t>(ph) * pw;

    Tensor corr = Tensor::zeros(Shape{C, K, H, W});
    std::vector<double> rk(static_cast<std::size_t>(Kk) * m * m);
    for (int k = 0; k < K; ++k) {
        const KernelRotator rot(m, theta_of(k, K));
        for (int c = 0; c < C; ++c) {
            for (int t = 0; t < Kk; ++t)
                rot.apply(kernels.data() + (static_cast<std::int64_t>(c) * Kk + t) * m * m,
                          rk.data() + static_cast<std::int64_t>(t) * m * m);
            double* o = corr.data() + (static_cast<std::int64_t>(c) * K + k) * plane;
            for (int kp = 0; kp < K; ++kp) {
                const int t = ((kp - k) % K + K) % K;
                if (t >= Kk) continue;
                detail::xcorr2d_acc(o, rk.data() + static_cast<std::int64_t>(t) * m * m, m,
                                    fp.data() + (static_cast<std::int64_t>(c) * K + kp) * pplane,
                                    ph, pw);
            }
        }
    }

    Tensor out = Tensor::zeros(Shape{Cp, K, H, W});
    for (int cp = 0; cp < Cp; ++cp) {
        for (int k = 0; k < K; ++k) {
            double* o = out.data() + (static_cast<std::int64_t>(cp) * K + k) * plane;
            for (int c = 0; c < C; ++c) {
                const double a = mix.at(cp, c);
                if (a == 0.0) continue;
                const double* s = corr.data() + (static_cast<std::int64_t>(c) * K + k) * plane;
                for (std::int64_t i = 0; i < plane; ++i) o[i] += a * s[i];
            }
            const double b = bias[cp];
            for (std::int64_t i = 0; i < plane; ++i) o[i] += b;
        }
    }
    if (corr_out) *corr_out = std::move(corr);
    return out;
}

inline LiftGrads gconv_backward(const Tensor& f, const Tensor& kernels, const Tensor& mix,
                                const Tensor& corr, const Tensor& outgrad) {
    const int C = f.dim(0), K = f.dim(1), H = f.dim(2), W = f.dim(3);
    const int Kk = kernels.dim(1), m = kernels.dim(2);
    const int Cp = mix.dim(0);
    const PadSpec pad = PadSpec::same(m);
    const Tensor fp = zero_pad2d(f, pad);
    const int ph = fp.dim(2), pw = fp.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t pplane = static_cast<std::int64_t>(ph) * pw;

    LiftGrads g;
    g.kernels = Tensor::zeros(kernels.shape());
    g.mix = Tensor::zeros(mix.shape());
    g.bias = Tensor::zeros(Shape{Cp});
    Tensor fpbar = Tensor::zeros(fp.shape());

    std::vector<double> u(static_cast<std::size_t>(plane));
    std::vector<double> rk(static_cast<std::size_t>(m) * m);
    std::vector<double> kb(static_cast<std::size_t>(m) * m);

    for (int k = 0; k < K; ++k) {
        const KernelRotator rot(m, theta_of(k, K));
        for (int c = 0; c < C; ++c) {
            std::fill(u.begin(), u.end(), 0.0);
            for (int cp = 0; cp < Cp; ++cp) {
                const double a = mix.at(cp, c);
                if (a == 0.0) continue;
                const double* og = outgrad.data() + (static_cast<std::int64_t>(cp) * K + k) * plane;
                for (std::int64_t i = 0; i < plane; ++i) u[static_cast<std::size_t>(i)] += a * og[i];
            }
            for (int kp = 0; kp < K; ++kp) {
                const int t = ((kp - k) % K + K) % K;
                if (t >= Kk) continue;
                const double* fslice = fp.data() + (static_cast<std::int64_t>(c) * K + kp) * pplane;
                std::fill(kb.begin(), kb.end(), 0.0);
                detail::xcorr2d_kernel_grad_acc(kb.data(), m, fslice, ph, pw, u.data());
                rot.apply_adjoint(kb.data(),
                                  g.kernels.data() + (static_cast<std::int64_t>(c) * Kk + t) * m * m);
                rot.apply(kernels.data() + (static_cast<std::int64_t>(c) * Kk + t) * m * m, rk.data());
                detail::xcorr2d_input_grad_acc(
                    fpbar.data() + (static_cast<std::int64_t>(c) * K + kp) * pplane, rk.data(), m,
                    u.data(), H, W, pw);
            }
        }
    }
    for (int cp = 0; cp < Cp; ++cp) {
        double bsum = 0.0;
        for (int k = 0; k < K; ++k) {
            const double* og = outgrad.data() + (static_cast<std::int64_t>(cp) * K + k) * plane;
            for (std::int64_t i = 0; i < plane; ++i) bsum += og[i];
            for (int c = 0; c < C; ++c) {
                const double* s = corr.data() + (static_cast<std::int64_t>(c) * K + k) * plane;
                double acc = 0.0;
                for (std::int64_t i = 0; i < plane; ++i) acc += og[i] * s[i];
                g.mix.at(cp, c) += acc;
            }
        }
        g.bias[cp] = bsum;
    }
    g.f = crop2d(fpbar, pad);
    return g;
}

/// Riemann sum of the theta integral: out = (2*pi/K) sum_k f[.,k,.,.].
/// With riemann_scale=false it is the plain sum.
inline Tensor project_integrate(const Tensor& f, bool riemann_scale = true) {
    if (f.rank() != 4) throw ShapeError("project_integrate expects C x K x H x W");
    const int C = f.dim(0), K = f.dim(1), H = f.dim(2), W = f.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const double scale = riemann_scale ? kTwoPi / K : 1.0;
    Tensor out = Tensor::zeros(Shape{C, H, W});
    for (int c = 0; c < C; ++c) {
        double* o = out.data() + static_cast<std::int64_t>(c) * plane;
        for (int k = 0; k < K; ++k) {
            const double* s = f.data() + (static_cast<std::int64_t>(c) * K + k) * plane;
            for (std::int64_t i = 0; i < plane; ++i) o[i] += s[i];
        }
        for (std::int64_t i = 0; i < plane; ++i) o[i] *= scale;
    }
    return out;
}

/// Pointwise maximum over the theta axis; ties go to the lowest k, and the
/// argmax indices (into the input, flat) are recorded for backward routing.
inline Tensor project_max(const Tensor& f, std::vector<std::int64_t>* arg_out = nullptr) {
    if (f.rank() != 4) throw ShapeError("project_max expects C x K x H x W");
    const int C = f.dim(0), K = f.dim(1), H = f.dim(2), W = f.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor out = Tensor::zeros(Shape{C, H, W});
    if (arg_out) arg_out->assign(static_cast<std::size_t>(out.numel()), 0);
    for (int c = 0; c < C; ++c) {
        for (std::int64_t i = 0; i < plane; ++i) {
            std::int64_t best = (static_cast<std::int64_t>(c) * K) * plane + i;
            double bv = f[best];
            for (int k = 1; k < K; ++k) {
                const std::int64_t idx = (static_cast<std::int64_t>(c) * K + k) * plane + i;
                if (f[idx] > bv) {
                    bv = f[idx];
                    best = idx;
                }
            }
            out[static_cast<std::int64_t>(c) * plane + i] = bv;
            if (arg_out) (*arg_out)[static_cast<std::size_t>(c * plane + i)] = best;
        }
    }
    return out;
}

/// Action of g on an orientation stack (C x K x H x W or K x H x W):
/// spatial action on each slice plus a cyclic shift along theta. g's angle
/// must lie on the theta grid.
inline Tensor rotate_stack(const SE2Element& g, const Tensor& f) {
    const bool rank3 = f.rank() == 3;
    if (!rank3 && f.rank() != 4) throw ShapeError("rotate_stack expects rank 3 or 4");
    const int C = rank3 ? 1 : f.dim(0);
    const int K = rank3 ? f.dim(0) : f.dim(1);
    const int H = f.dim(f.rank() - 2), W = f.dim(f.rank() - 1);
    const double step = kTwoPi / K;
    const int s = static_cast<int>(std::llround(mod_2pi(g.theta) / step)) % K;
    if (std::abs(mod_2pi(g.theta) - mod_2pi(s * step)) > 1e-9)
        throw ContractError("rotate_stack: angle must be a multiple of 2*pi/K");
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor out = Tensor::zeros(f.shape());
    for (int c = 0; c < C; ++c) {
        for (int k = 0; k < K; ++k) {
            const int ksrc = ((k - s) % K + K) % K;
            Tensor slice = Tensor::zeros(Shape{H, W});
            const double* src = f.data() + (static_cast<std::int64_t>(c) * K + ksrc) * plane;
            std::copy(src, src + plane, slice.data());
            const Tensor moved = act_on_image(g, slice);
            double* dst = out.data() + (static_cast<std::int64_t>(c) * K + k) * plane;
            std::copy(moved.data(), moved.data() + plane, dst);
        }
    }
    return out;
}

/// act_on_image extended to channel stacks (rank 2 or C x H x W).
inline Tensor act_on_maps(const SE2Element& g, const Tensor& f) {
    if (f.rank() == 2) return act_on_image(g, f);
    if (f.rank() != 3) throw ShapeError("act_on_maps expects rank 2 or 3");
    const int C = f.dim(0), H = f.dim(1), W = f.dim(2);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor out = Tensor::zeros(f.shape());
    for (int c = 0; c < C; ++c) {
        Tensor slice = Tensor::zeros(Shape{H, W});
        std::copy(f.data() + c * plane, f.data() + (c + 1) * plane, slice.data());
        const Tensor moved = act_on_image(g, slice);
        std::copy(moved.data(), moved.data() + plane, out.data() + c * plane);
    }
    return out;
}

/// Relative equivariance defect ||net(g.f) - g.net(f)||_2 / ||net(f)||_2 for
/// an image -> image (or image -> channel stack) operator.
inline double equivariance_error(const std::function<Tensor(const Tensor&)>& net, const Tensor& f,
                                 const SE2Element& g) {
    const Tensor base = net(f);
    const Tensor lhs = net(act_on_image(g, f));
    const Tensor rhs = act_on_maps(g, base);
    if (lhs.shape() != rhs.shape()) throw ShapeError("equivariance_error: output shapes differ");
    double num = 0.0;
    for (std::int64_t i = 0; i < lhs.numel(); ++i) {
        const double d = lhs[i] - rhs[i];
        num += d * d;
    }
    const double den = l2_norm(base);
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num) / den;
}

/// A forward-only lift -> gconv^L -> projection pipeline mapping one image to
/// one image. Used by the equivariance checks and the CLI.
struct GcnnPipeline {
    int K = 8;
    Tensor lift_kernels, lift_mix, lift_bias;
    struct GLayer {
        Tensor kernels, mix, bias;
    };
    std::vector<GLayer> glayers;
    bool project_by_max = true;
    bool relu_between = true;

    // Random weights for equivariance measurements. Two choices matter for
    // what the measurement means:
    //  - biases stay zero: a nonzero bias puts a constant plateau on the
    //    whole frame, and off-grid rotations clip the frame corners, which
    //    would put an input-independent floor under the measured defect;
    //  - kernels are spatially smoothed white noise: bilinear kernel rotation
    //    only commutes with the image rotation up to the kernel's bandwidth,
    //    so the interpolation-limited bound is measured on band-limited
    //    kernels just like on band-limited inputs. Quarter-turn equivariance
    //    is exact either way.
    static GcnnPipeline random(int K, int channels, int n_glayers, int m_lift, int m_g, Rng& rng) {
        GcnnPipeline p;
        p.K = K;
        auto fill = [&rng](Tensor& t, double scale) {
            for (auto& v : t.vec()) v = scale * rng.normal();
        };
        auto blur_slices = [](Tensor& t, int m) {
            const std::int64_t slices = t.numel() / (m * m);
            const double w[3] = {0.25, 0.5, 0.25};
            for (std::int64_t s = 0; s < slices; ++s) {
                double* k = t.data() + s * m * m;
                for (int pass = 0; pass < 2; ++pass) {
                    std::vector<double> tmp(static_cast<std::size_t>(m) * m, 0.0);
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < m; ++j)
                            for (int di = -1; di <= 1; ++di)
                                for (int dj = -1; dj <= 1; ++dj) {
                                    const int si = i + di, sj = j + dj;
                                    if (si < 0 || si >= m || sj < 0 || sj >= m) continue;
                                    tmp[static_cast<std::size_t>(i) * m + j] +=
                                        w[di + 1] * w[dj + 1] * k[si * m + sj];
                                }
                    std::copy(tmp.begin(), tmp.end(), k);
                }
            }
        };
        p.lift_kernels = Tensor::zeros(Shape{1, m_lift, m_lift});
        p.lift_mix = Tensor::zeros(Shape{channels, 1});
        p.lift_bias = Tensor::zeros(Shape{channels});
        fill(p.lift_kernels, 0.5);
        blur_slices(p.lift_kernels, m_lift);
        fill(p.lift_mix, 0.5);
        for (int l = 0; l < n_glayers; ++l) {
            GLayer gl;
            gl.kernels = Tensor::zeros(Shape{channels, K, m_g, m_g});
            gl.mix = Tensor::zeros(Shape{channels, channels});
            gl.bias = Tensor::zeros(Shape{channels});
            fill(gl.kernels, 0.4);
            blur_slices(gl.kernels, m_g);
            fill(gl.mix, 0.4);
            p.glayers.push_back(std::move(gl));
        }
        return p;
    }

    Tensor forward(const Tensor& image) const {
        Tensor x = image.rank() == 2 ? image.reshaped(Shape{1, image.dim(0), image.dim(1)}) : image;
        Tensor s = lift_forward(x, lift_kernels, lift_mix, lift_bias, K);
        if (relu_between) s = scalar_act(ScalarAct::Relu, s);
        for (const GLayer& gl : glayers) {
            s = gconv_forward(s, gl.kernels, gl.mix, gl.bias);
            if (relu_between) s = scalar_act(ScalarAct::Relu, s);
        }
        Tensor out = project_by_max ? project_max(s) : project_integrate(s);
        if (out.dim(0) == 1) return out.reshaped(Shape{out.dim(1), out.dim(2)});
        return out;
    }
};

} // namespace gradkit
