#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "gradkit/conv.hpp"
#include "gradkit/se2.hpp"

namespace gradkit {

// Max tropical semiring (R u {-inf}, max, +). The additive identity is -inf,
// the multiplicative identity is 0. Finite inputs only, so IEEE arithmetic
// realizes the absorbing rule (-inf) + x = -inf directly.
constexpr double kTropZero = -std::numeric_limits<double>::infinity();
constexpr double kTropOne = 0.0;

inline double trop_add(double a, double b) { return std::max(a, b); }
inline double trop_mul(double a, double b) { return a + b; }

/// A kernel is proper when at least one entry is finite.
inline bool trop_proper(const Tensor& k) {
    for (std::int64_t i = 0; i < k.numel(); ++i)
        if (std::isfinite(k[i])) return true;
    return false;
}

/// Morphological (max-plus) convolution:
///   out[i1,i2] = max_{j1,j2: k finite} k[j1,j2] + f[i1*s + j1, i2*s + j2].
/// Positions where the kernel is -inf are excluded from the window.
/// If arg_out is non-null it receives per output element the flat input
/// index of the selected maximum (lowest index on ties).
inline Tensor morph_conv2d(const Tensor& k, const Tensor& f, int stride = 1,
                           std::vector<std::int64_t>* arg_out = nullptr) {
    if (k.rank() != 2 || f.rank() != 2) throw ShapeError("morph_conv2d expects rank-2 tensors");
    const int m1 = k.dim(0), m2 = k.dim(1);
    const int h = f.dim(0), w = f.dim(1);
    if (m1 > h || m2 > w) throw ShapeError("morph_conv2d: kernel larger than input");
    if (stride < 1) throw ShapeError("morph_conv2d: stride must be >= 1");
    if (!trop_proper(k)) throw ContractError("morph_conv2d: kernel has no finite entry");
    const int oh = (h - m1) / stride + 1, ow = (w - m2) / stride + 1;
    Tensor out = Tensor::zeros(Shape{oh, ow});
    if (arg_out) arg_out->assign(static_cast<std::size_t>(out.numel()), 0);
    for (int i1 = 0; i1 < oh; ++i1) {
        for (int i2 = 0; i2 < ow; ++i2) {
            double best = kTropZero;
            std::int64_t besti = -1;
            for (int j1 = 0; j1 < m1; ++j1) {
                for (int j2 = 0; j2 < m2; ++j2) {
                    const double kv = k.at(j1, j2);
                    if (kv == kTropZero) continue;
                    const std::int64_t fi =
                        static_cast<std::int64_t>(i1 * stride + j1) * w + (i2 * stride + j2);
                    const double v = kv + f[fi];
                    if (v > best) {
                        best = v;
                        besti = fi;
                    }
                }
            }
            out.at(i1, i2) = best;
            if (arg_out) (*arg_out)[static_cast<std::size_t>(i1) * ow + i2] = besti;
        }
    }
    return out;
}

/// The pointwise-ReLU construction: kernel 0 at the identity, -sup f
/// elsewhere. Evaluated through the tropical integral the off-identity part
/// contributes (-sup f) (+) sup f = 0, so the operator reduces to
/// max{f(h), 0} pointwise, which is asserted to equal the ReLU.
inline Tensor trop_relu_identity(const Tensor& f) {
    double s = f[0];
    for (std::int64_t i = 1; i < f.numel(); ++i) s = trop_add(s, f[i]);
    const double off = trop_mul(-s, s);
    Tensor out = f;
    for (auto& v : out.vec()) v = trop_add(v, off);
    return out;
}

namespace detail {

// Nearest-neighbour rotation of one tropical tap: bilinear weights would mix
// -inf entries into NaNs, so off-grid angles snap to the nearest source cell.
// Quarter turns are exact index permutations.
inline void rotate_trop_tap(const double* k, int m, double theta, double* out) {
    const double c = 0.5 * (m - 1);
    double co, si;
    snapped_trig(-theta, co, si);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const double p1 = i - c, p2 = j - c;
            const double q1 = co * p1 - si * p2 + c;
            const double q2 = si * p1 + co * p2 + c;
            const int s1 = static_cast<int>(std::llround(q1));
            const int s2 = static_cast<int>(std::llround(q2));
            out[static_cast<std::size_t>(i) * m + j] =
                (s1 >= 0 && s1 < m && s2 >= 0 && s2 < m)
                    ? k[static_cast<std::size_t>(s1) * m + s2]
                    : kTropZero;
        }
    }
}

} // namespace detail

/// Max-plus analogue of the group convolution on a K x H x W orientation
/// stack: the kernel taps are rotated and cyclically shifted exactly like in
/// gconv_forward, with max-plus in place of sum-product. Out-of-frame samples
/// are excluded (tropical zero padding).
inline Tensor morph_conv_se2(const Tensor& k, const Tensor& f) {
    if (k.rank() != 3 || f.rank() != 3)
        throw ShapeError("morph_conv_se2 expects K x m x m kernel and K x H x W stack");
    const int K = f.dim(0), H = f.dim(1), W = f.dim(2);
    if (k.dim(0) != K) throw ShapeError("morph_conv_se2: angular support must equal K");
    const int m = k.dim(1);
    if (k.dim(2) != m) throw ShapeError("morph_conv_se2: taps must be square");
    if (m % 2 == 0) throw ContractError("morph_conv_se2: tap size must be odd");
    if (!trop_proper(k)) throw ContractError("morph_conv_se2: kernel has no finite entry");
    const int off = (m - 1) / 2;
    Tensor out = Tensor::full(Shape{K, H, W}, kTropZero);
    std::vector<double> rk(static_cast<std::size_t>(K) * m * m);
    for (int kk = 0; kk < K; ++kk) {
        for (int t = 0; t < K; ++t)
            detail::rotate_trop_tap(k.data() + static_cast<std::int64_t>(t) * m * m, m,
                                    theta_of(kk, K),
                                    rk.data() + static_cast<std::int64_t>(t) * m * m);
        for (int i1 = 0; i1 < H; ++i1) {
            for (int i2 = 0; i2 < W; ++i2) {
                double best = kTropZero;
                for (int kp = 0; kp < K; ++kp) {
                    const int t = ((kp - kk) % K + K) % K;
                    const double* kt = rk.data() + static_cast<std::int64_t>(t) * m * m;
                    for (int j1 = 0; j1 < m; ++j1) {
                        const int fi1 = i1 + j1 - off;
                        if (fi1 < 0 || fi1 >= H) continue;
                        for (int j2 = 0; j2 < m; ++j2) {
                            const int fi2 = i2 + j2 - off;
                            if (fi2 < 0 || fi2 >= W) continue;
                            const double kv = kt[static_cast<std::size_t>(j1) * m + j2];
                            if (kv == kTropZero) continue;
                            const double v = kv + f.at(kp, fi1, fi2);
                            if (v > best) best = v;
                        }
                    }
                }
                out.at(kk, i1, i2) = best;
            }
        }
    }
    return out;
}

} // namespace gradkit
