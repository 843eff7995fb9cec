#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "gradkit/tensor.hpp"

namespace gradkit {

constexpr double kTwoPi = 6.28318530717958647692;

/// Orientation grid used everywhere on discretized SE(2): theta_k = 2*pi*k/K,
/// uniform, no offset. With 4 | K quarter turns land exactly on the grid.
inline double theta_of(int k, int K) { return kTwoPi * k / K; }

inline double mod_2pi(double t) {
    t = std::fmod(t, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    // fmod can land exactly on 2*pi after the correction of a tiny negative.
    if (t >= kTwoPi) t -= kTwoPi;
    return t;
}

/// cos/sin with results snapped to exact {0, +-1} near multiples of pi/2, so
/// quarter-turn rotations act as exact index permutations on grids.
inline void snapped_trig(double theta, double& c, double& s) {
    c = std::cos(theta);
    s = std::sin(theta);
    const double eps = 1e-12;
    if (std::abs(c) < eps) c = 0.0;
    if (std::abs(s) < eps) s = 0.0;
    if (std::abs(c - 1.0) < eps) c = 1.0;
    if (std::abs(c + 1.0) < eps) c = -1.0;
    if (std::abs(s - 1.0) < eps) s = 1.0;
    if (std::abs(s + 1.0) < eps) s = -1.0;
}

/// Group element of SE(2): translation x (array convention, x[0] = row
/// offset) and rotation angle theta kept in [0, 2*pi).
struct SE2Element {
    std::array<double, 2> x{0.0, 0.0};
    double theta = 0.0;

    SE2Element() = default;
    SE2Element(double x1, double x2, double t) : x{x1, x2}, theta(mod_2pi(t)) {}

    static SE2Element identity() { return SE2Element(); }
};

/// R(theta) applied to a 2-vector.
inline std::array<double, 2> rotate_vec(double theta, const std::array<double, 2>& v) {
    double c, s;
    snapped_trig(theta, c, s);
    return {c * v[0] - s * v[1], s * v[0] + c * v[1]};
}

/// (x1,R1)(x2,R2) = (x1 + R1 x2, R1 R2); angles add mod 2*pi.
inline SE2Element se2_compose(const SE2Element& g1, const SE2Element& g2) {
    const auto rx = rotate_vec(g1.theta, g2.x);
    return SE2Element(g1.x[0] + rx[0], g1.x[1] + rx[1], g1.theta + g2.theta);
}

/// g^-1 = (-R(-theta) x, -theta).
inline SE2Element se2_inverse(const SE2Element& g) {
    const auto rx = rotate_vec(-g.theta, g.x);
    return SE2Element(-rx[0], -rx[1], -g.theta);
}

inline double se2_distance(const SE2Element& a, const SE2Element& b) {
    double dt = std::abs(mod_2pi(a.theta) - mod_2pi(b.theta));
    dt = std::min(dt, kTwoPi - dt);
    return std::abs(a.x[0] - b.x[0]) + std::abs(a.x[1] - b.x[1]) + dt;
}

namespace detail {

// Bilinear sample with zero extension outside [0,h) x [0,w).
inline double bilinear_at(const double* f, int h, int w, double q1, double q2) {
    const double fl1 = std::floor(q1), fl2 = std::floor(q2);
    const int i0 = static_cast<int>(fl1), j0 = static_cast<int>(fl2);
    const double a = q1 - fl1, b = q2 - fl2;
    double s = 0.0;
    const double w00 = (1.0 - a) * (1.0 - b), w01 = (1.0 - a) * b;
    const double w10 = a * (1.0 - b), w11 = a * b;
    auto pick = [&](int i, int j) -> double {
        return (i >= 0 && i < h && j >= 0 && j < w) ? f[static_cast<std::size_t>(i) * w + j] : 0.0;
    };
    if (w00 != 0.0) s += w00 * pick(i0, j0);
    if (w01 != 0.0) s += w01 * pick(i0, j0 + 1);
    if (w10 != 0.0) s += w10 * pick(i0 + 1, j0);
    if (w11 != 0.0) s += w11 * pick(i0 + 1, j0 + 1);
    return s;
}

} // namespace detail

/// Induced action on images: (g.f)(p) = f(g^-1 . p), with the rotation taken
/// about the image center and bilinear resampling; zero outside the frame.
/// For quarter turns and integer translations the resampling degenerates to
/// an exact pixel permutation.
inline Tensor act_on_image(const SE2Element& g, const Tensor& f) {
    if (f.rank() != 2) throw ShapeError("act_on_image expects an H x W image");
    const int h = f.dim(0), w = f.dim(1);
    const double c1 = 0.5 * (h - 1), c2 = 0.5 * (w - 1);
    double co, si;
    snapped_trig(-g.theta, co, si);
    Tensor out = Tensor::zeros(f.shape());
    const double* src = f.data();
    double* dst = out.data();
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double p1 = i - c1 - g.x[0];
            const double p2 = j - c2 - g.x[1];
            const double q1 = co * p1 - si * p2 + c1;
            const double q2 = si * p1 + co * p2 + c2;
            dst[static_cast<std::size_t>(i) * w + j] = detail::bilinear_at(src, h, w, q1, q2);
        }
    }
    return out;
}

/// Precomputed sparse map for resampling an odd m x m kernel at rotated
/// coordinates: out[dst] = sum w * k[src]. apply_adjoint scatters gradients
/// back through the same weights.
class KernelRotator {
public:
    KernelRotator(int m, double theta) : m_(m) {
        if (m % 2 == 0) throw ContractError("rotate_kernel: kernel size must be odd");
        const double c = 0.5 * (m - 1);
        double co, si;
        snapped_trig(-theta, co, si);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                const double p1 = i - c, p2 = j - c;
                const double q1 = co * p1 - si * p2 + c;
                const double q2 = si * p1 + co * p2 + c;
                const double fl1 = std::floor(q1), fl2 = std::floor(q2);
                const int i0 = static_cast<int>(fl1), j0 = static_cast<int>(fl2);
                const double a = q1 - fl1, b = q2 - fl2;
                const double ws[4] = {(1.0 - a) * (1.0 - b), (1.0 - a) * b, a * (1.0 - b), a * b};
                const int is[4] = {i0, i0, i0 + 1, i0 + 1};
                const int js[4] = {j0, j0 + 1, j0, j0 + 1};
                Entry e;
                e.dst = i * m + j;
                e.n = 0;
                for (int t = 0; t < 4; ++t) {
                    if (ws[t] == 0.0) continue;
                    if (is[t] < 0 || is[t] >= m || js[t] < 0 || js[t] >= m) continue;
                    e.src[e.n] = is[t] * m + js[t];
                    e.w[e.n] = ws[t];
                    ++e.n;
                }
                if (e.n > 0) entries_.push_back(e);
            }
        }
    }

    int size() const { return m_; }

    void apply(const double* k, double* out) const {
        const std::size_t n = static_cast<std::size_t>(m_) * m_;
        for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
        for (const Entry& e : entries_) {
            double s = 0.0;
            for (int t = 0; t < e.n; ++t) s += e.w[t] * k[e.src[t]];
            out[e.dst] = s;
        }
    }

    void apply_adjoint(const double* u, double* kbar) const {
        for (const Entry& e : entries_) {
            const double uv = u[e.dst];
            if (uv == 0.0) continue;
            for (int t = 0; t < e.n; ++t) kbar[e.src[t]] += e.w[t] * uv;
        }
    }

private:
    struct Entry {
        int dst;
        int n;
        int src[4];
        double w[4];
    };
    int m_;
    std::vector<Entry> entries_;
};

/// Rotated copy of an odd square kernel: samples at R(-theta) coordinates
/// about the center by bilinear interpolation, zero outside the support.
inline Tensor rotate_kernel(const Tensor& k, double theta) {
    if (k.rank() != 2 || k.dim(0) != k.dim(1)) throw ShapeError("rotate_kernel expects square kernel");
    KernelRotator rot(k.dim(0), theta);
    Tensor out = Tensor::zeros(k.shape());
    rot.apply(k.data(), out.data());
    return out;
}

} // namespace gradkit
