#pragma once

#include <cmath>
#include <vector>

#include "gradkit/tensor.hpp"

namespace gradkit {

/// Zero-padding amounts; same(m) keeps the output of an m x m valid
/// cross-correlation at the input's spatial size.
struct PadSpec {
    int top = 0, bottom = 0, left = 0, right = 0;

    static PadSpec same(int m) {
        PadSpec p;
        p.top = p.left = (m - 1) / 2;
        p.bottom = p.right = m / 2; // ceil((m-1)/2)
        return p;
    }

    bool none() const { return top == 0 && bottom == 0 && left == 0 && right == 0; }
};

/// (k ⋆ f)[i] = sum_j k[j] f[i+j], valid range only.
inline Tensor xcorr1d(const Tensor& k, const Tensor& f) {
    if (k.rank() != 1 || f.rank() != 1) throw ShapeError("xcorr1d expects rank-1 tensors");
    const int m = k.dim(0), n = f.dim(0);
    if (m > n) throw ShapeError("xcorr1d: kernel longer than input");
    Tensor out = Tensor::zeros(Shape{n - m + 1});
    for (int i = 0; i <= n - m; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += k[j] * f[i + j];
        out[i] = s;
    }
    return out;
}

/// Discrete convolution = cross-correlation with the kernel reversed.
inline Tensor conv1d(const Tensor& k, const Tensor& f) {
    if (k.rank() != 1) throw ShapeError("conv1d expects rank-1 kernel");
    Tensor rev = k;
    std::reverse(rev.vec().begin(), rev.vec().end());
    return xcorr1d(rev, f);
}

namespace detail {

// out(oh x ow) += scale * (k ⋆ f) with f of h x w and square kernel m x m.
inline void xcorr2d_acc(double* out, const double* k, int m, const double* f, int h, int w,
                        double scale = 1.0) {
    const int oh = h - m + 1, ow = w - m + 1;
    for (int i1 = 0; i1 < oh; ++i1) {
        for (int i2 = 0; i2 < ow; ++i2) {
            double s = 0.0;
            const double* kp = k;
            for (int j1 = 0; j1 < m; ++j1) {
                const double* fp = f + static_cast<std::size_t>(i1 + j1) * w + i2;
                for (int j2 = 0; j2 < m; ++j2) s += kp[j2] * fp[j2];
                kp += m;
            }
            out[static_cast<std::size_t>(i1) * ow + i2] += scale * s;
        }
    }
}

// fbar(h x w) += scale * scatter of u(oh x ow) through kernel k: the adjoint
// of xcorr2d_acc with respect to the input.
inline void xcorr2d_input_grad_acc(double* fbar, const double* k, int m, const double* u, int oh,
                                   int ow, int w, double scale = 1.0) {
    for (int i1 = 0; i1 < oh; ++i1) {
        for (int i2 = 0; i2 < ow; ++i2) {
            const double uv = scale * u[static_cast<std::size_t>(i1) * ow + i2];
            if (uv == 0.0) continue;
            const double* kp = k;
            for (int j1 = 0; j1 < m; ++j1) {
                double* fp = fbar + static_cast<std::size_t>(i1 + j1) * w + i2;
                for (int j2 = 0; j2 < m; ++j2) fp[j2] += uv * kp[j2];
                kp += m;
            }
        }
    }
}

// kbar(m x m) += scale * gradient of (k ⋆ f) wrt k given outgrad u, which is
// itself a cross-correlation: kbar[j] = sum_i u[i] f[i+j].
inline void xcorr2d_kernel_grad_acc(double* kbar, int m, const double* f, int h, int w,
                                    const double* u, double scale = 1.0) {
    const int oh = h - m + 1, ow = w - m + 1;
    (void)h;
    for (int j1 = 0; j1 < m; ++j1) {
        for (int j2 = 0; j2 < m; ++j2) {
            double s = 0.0;
            for (int i1 = 0; i1 < oh; ++i1) {
                const double* fp = f + static_cast<std::size_t>(i1 + j1) * w + j2;
                const double* up = u + static_cast<std::size_t>(i1) * ow;
                for (int i2 = 0; i2 < ow; ++i2) s += up[i2] * fp[i2];
            }
            kbar[static_cast<std::size_t>(j1) * m + j2] += scale * s;
        }
    }
}

} // namespace detail

/// Valid 2D cross-correlation of a square kernel over an h x w input.
inline Tensor xcorr2d(const Tensor& k, const Tensor& f) {
    if (k.rank() != 2 || f.rank() != 2) throw ShapeError("xcorr2d expects rank-2 tensors");
    const int m = k.dim(0);
    if (k.dim(1) != m) throw ShapeError("xcorr2d: kernel must be square");
    const int h = f.dim(0), w = f.dim(1);
    if (m > h || m > w) throw ShapeError("xcorr2d: kernel larger than input");
    Tensor out = Tensor::zeros(Shape{h - m + 1, w - m + 1});
    detail::xcorr2d_acc(out.data(), k.data(), m, f.data(), h, w);
    return out;
}

/// Zero padding of the last two dims; leading dims (channels, orientations)
/// are padded slice by slice.
inline Tensor zero_pad2d(const Tensor& f, const PadSpec& p) {
    if (f.rank() < 2) throw ShapeError("zero_pad2d expects rank >= 2");
    const int r = f.rank();
    const int h = f.dim(r - 2), w = f.dim(r - 1);
    std::int64_t lead = 1;
    std::vector<int> dims = f.shape().dims;
    for (int i = 0; i < r - 2; ++i) lead *= dims[i];
    const int ph = h + p.top + p.bottom, pw = w + p.left + p.right;
    dims[r - 2] = ph;
    dims[r - 1] = pw;
    Tensor out = Tensor::zeros(Shape(dims));
    const double* src = f.data();
    double* dst = out.data();
    for (std::int64_t c = 0; c < lead; ++c) {
        const double* s = src + c * h * w;
        double* d = dst + c * static_cast<std::int64_t>(ph) * pw;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                d[static_cast<std::size_t>(i + p.top) * pw + (j + p.left)] =
                    s[static_cast<std::size_t>(i) * w + j];
    }
    return out;
}

/// Crop: the adjoint of zero_pad2d.
inline Tensor crop2d(const Tensor& f, const PadSpec& p) {
    const int r = f.rank();
    const int ph = f.dim(r - 2), pw = f.dim(r - 1);
    const int h = ph - p.top - p.bottom, w = pw - p.left - p.right;
    if (h < 1 || w < 1) throw ShapeError("crop2d: padding exceeds size");
    std::vector<int> dims = f.shape().dims;
    std::int64_t lead = 1;
    for (int i = 0; i < r - 2; ++i) lead *= dims[i];
    dims[r - 2] = h;
    dims[r - 1] = w;
    Tensor out = Tensor::zeros(Shape(dims));
    for (std::int64_t c = 0; c < lead; ++c) {
        const double* s = f.data() + c * static_cast<std::int64_t>(ph) * pw;
        double* d = out.data() + c * h * w;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                d[static_cast<std::size_t>(i) * w + j] =
                    s[static_cast<std::size_t>(i + p.top) * pw + (j + p.left)];
    }
    return out;
}

/// m x m max pooling with stride m over the last two dims; trailing rows and
/// columns that do not fill a block are ignored. Ties go to the lowest flat
/// index so the backward routing is deterministic.
/// If arg_out is non-null it receives, per output element, the flat index
/// into the input of the selected maximum.
inline Tensor maxpool2d(const Tensor& f, int m, std::vector<std::int64_t>* arg_out = nullptr) {
    if (f.rank() < 2) throw ShapeError("maxpool2d expects rank >= 2");
    if (m < 1) throw ShapeError("maxpool2d: window must be >= 1");
    const int r = f.rank();
    const int h = f.dim(r - 2), w = f.dim(r - 1);
    const int oh = h / m, ow = w / m;
    if (oh < 1 || ow < 1) throw ShapeError("maxpool2d: window larger than input");
    std::vector<int> dims = f.shape().dims;
    std::int64_t lead = 1;
    for (int i = 0; i < r - 2; ++i) lead *= dims[i];
    dims[r - 2] = oh;
    dims[r - 1] = ow;
    Tensor out = Tensor::zeros(Shape(dims));
    if (arg_out) arg_out->assign(static_cast<std::size_t>(out.numel()), 0);
    for (std::int64_t c = 0; c < lead; ++c) {
        const double* s = f.data() + c * static_cast<std::int64_t>(h) * w;
        double* d = out.data() + c * static_cast<std::int64_t>(oh) * ow;
        for (int i1 = 0; i1 < oh; ++i1) {
            for (int i2 = 0; i2 < ow; ++i2) {
                std::int64_t best = static_cast<std::int64_t>(i1) * m * w + static_cast<std::int64_t>(i2) * m;
                double bv = s[best];
                for (int j1 = 0; j1 < m; ++j1)
                    for (int j2 = 0; j2 < m; ++j2) {
                        const std::int64_t idx =
                            (static_cast<std::int64_t>(i1) * m + j1) * w + i2 * m + j2;
                        if (s[idx] > bv) {
                            bv = s[idx];
                            best = idx;
                        }
                    }
                d[static_cast<std::size_t>(i1) * ow + i2] = bv;
                if (arg_out)
                    (*arg_out)[static_cast<std::size_t>(c * oh * ow + i1 * ow + i2)] =
                        c * static_cast<std::int64_t>(h) * w + best;
            }
        }
    }
    return out;
}

/// Single channel convolution: per-channel cross-correlation followed by a
/// pointwise mix, SCC_{k,A}(f)[c'] = sum_c A[c',c] (k[c] ⋆ f[c]) + b[c'].
/// Trainable parameter count: C*m^2 + C'*C (+ C' with bias).
/// If corr_out is non-null it receives the per-channel correlation maps
/// (shape C x oh x ow), which the backward pass for the mix matrix needs.
inline Tensor scc_forward(const Tensor& f, const Tensor& k, const Tensor& A, const Tensor& bias,
                          Tensor* corr_out = nullptr) {
    if (f.rank() != 3 || k.rank() != 3) throw ShapeError("scc_forward expects C x h x w and C x m x m");
    const int C = f.dim(0), h = f.dim(1), w = f.dim(2);
    if (k.dim(0) != C) throw ShapeError("scc_forward: channel counts disagree");
    const int m = k.dim(1);
    if (k.dim(2) != m) throw ShapeError("scc_forward: kernels must be square");
    if (m > h || m > w) throw ShapeError("scc_forward: kernel larger than input");
    if (A.rank() != 2 || A.dim(1) != C) throw ShapeError("scc_forward: mix matrix must be C' x C");
    const int Cp = A.dim(0);
    if (bias.numel() != Cp) throw ShapeError("scc_forward: bias must have C' entries");
    const int oh = h - m + 1, ow = w - m + 1;

    Tensor corr = Tensor::zeros(Shape{C, oh, ow});
    for (int c = 0; c < C; ++c)
        detail::xcorr2d_acc(corr.data() + static_cast<std::int64_t>(c) * oh * ow,
                            k.data() + static_cast<std::int64_t>(c) * m * m, m,
                            f.data() + static_cast<std::int64_t>(c) * h * w, h, w);

    Tensor out = Tensor::zeros(Shape{Cp, oh, ow});
    const std::int64_t plane = static_cast<std::int64_t>(oh) * ow;
    for (int cp = 0; cp < Cp; ++cp) {
        double* o = out.data() + cp * plane;
        for (int c = 0; c < C; ++c) {
            const double a = A.at(cp, c);
            if (a == 0.0) continue;
            const double* s = corr.data() + c * plane;
            for (std::int64_t i = 0; i < plane; ++i) o[i] += a * s[i];
        }
        const double b = bias[cp];
        for (std::int64_t i = 0; i < plane; ++i) o[i] += b;
    }
    if (corr_out) *corr_out = std::move(corr);
    return out;
}

/// Multi channel convolution: MCC_k(f)[c'] = sum_c k[c',c] ⋆ f[c] + b[c'].
/// Trainable parameter count: C'*C*m^2 (+ C' with bias).
inline Tensor mcc_forward(const Tensor& f, const Tensor& k, const Tensor& bias) {
    if (f.rank() != 3 || k.rank() != 4)
        throw ShapeError("mcc_forward expects C x h x w input and C' x C x m x m kernels");
    const int C = f.dim(0), h = f.dim(1), w = f.dim(2);
    const int Cp = k.dim(0);
    if (k.dim(1) != C) throw ShapeError("mcc_forward: channel counts disagree");
    const int m = k.dim(2);
    if (k.dim(3) != m) throw ShapeError("mcc_forward: kernels must be square");
    if (m > h || m > w) throw ShapeError("mcc_forward: kernel larger than input");
    if (bias.numel() != Cp) throw ShapeError("mcc_forward: bias must have C' entries");
    const int oh = h - m + 1, ow = w - m + 1;
    Tensor out = Tensor::zeros(Shape{Cp, oh, ow});
    const std::int64_t plane = static_cast<std::int64_t>(oh) * ow;
    for (int cp = 0; cp < Cp; ++cp) {
        double* o = out.data() + cp * plane;
        for (int c = 0; c < C; ++c)
            detail::xcorr2d_acc(o, k.data() + (static_cast<std::int64_t>(cp) * C + c) * m * m, m,
                                f.data() + static_cast<std::int64_t>(c) * h * w, h, w);
        const double b = bias[cp];
        for (std::int64_t i = 0; i < plane; ++i) o[i] += b;
    }
    return out;
}

inline std::int64_t scc_param_count(int C, int Cp, int m, bool with_bias = false) {
    return static_cast<std::int64_t>(C) * m * m + static_cast<std::int64_t>(Cp) * C +
           (with_bias ? Cp : 0);
}

inline std::int64_t mcc_param_count(int C, int Cp, int m, bool with_bias = false) {
    return static_cast<std::int64_t>(Cp) * C * m * m + (with_bias ? Cp : 0);
}

/// Builds the MCC kernel stack k'[c',c] = A[c',c] * k[c] equivalent to a
/// given SCC layer; outputs agree on every input up to rounding.
inline Tensor scc_to_mcc_kernels(const Tensor& k, const Tensor& A) {
    const int C = k.dim(0), m = k.dim(1);
    const int Cp = A.dim(0);
    if (A.dim(1) != C) throw ShapeError("scc_to_mcc: mix matrix must be C' x C");
    Tensor out = Tensor::zeros(Shape{Cp, C, m, m});
    for (int cp = 0; cp < Cp; ++cp)
        for (int c = 0; c < C; ++c) {
            const double a = A.at(cp, c);
            for (int j1 = 0; j1 < m; ++j1)
                for (int j2 = 0; j2 < m; ++j2) out.at(cp, c, j1, j2) = a * k.at(c, j1, j2);
        }
    return out;
}

} // namespace gradkit
