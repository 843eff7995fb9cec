#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "gradkit/optim.hpp"
#include "gradkit/tensor.hpp"

namespace gradkit {

/// Four synthetic 2-parameter loss surfaces with closed forms and analytic
/// gradients. Constants (one place, documented):
///   canyon:   0.5 (100 w1^2 + w2^2)                 stiff/soft axis pair
///   saddle:   w1^2 - w2^2 + 0.1 w2^4                quartic confinement
///   plateau:  2 r^2 / (1 + r^2), r^2 = |w|^2        flattens away from 0
///   obstacle: 0.5 |w|^2 + 3 exp(-|w - p|^2 / (2 s^2)), p = (0.5, 0.5), s = 0.4
enum class LandscapeKind { Canyon, Saddle, Plateau, Obstacle };

inline LandscapeKind landscape_from_string(const std::string& s) {
    if (s == "canyon") return LandscapeKind::Canyon;
    if (s == "saddle") return LandscapeKind::Saddle;
    if (s == "plateau") return LandscapeKind::Plateau;
    if (s == "obstacle") return LandscapeKind::Obstacle;
    throw ContractError("unknown landscape '" + s + "'");
}

inline const char* landscape_name(LandscapeKind k) {
    switch (k) {
        case LandscapeKind::Canyon: return "canyon";
        case LandscapeKind::Saddle: return "saddle";
        case LandscapeKind::Plateau: return "plateau";
        case LandscapeKind::Obstacle: return "obstacle";
    }
    return "?";
}

constexpr double kPlateauScale = 2.0;
constexpr double kObstacleHeight = 3.0;
constexpr double kObstacleWidth = 0.4;
constexpr double kObstacleCx = 0.5;
constexpr double kObstacleCy = 0.5;

struct LandscapeEval {
    double loss;
    std::array<double, 2> grad;
};

inline LandscapeEval landscape_eval(LandscapeKind kind, double w1, double w2) {
    LandscapeEval e{0.0, {0.0, 0.0}};
    switch (kind) {
        case LandscapeKind::Canyon:
            e.loss = 0.5 * (100.0 * w1 * w1 + w2 * w2);
            e.grad = {100.0 * w1, w2};
            break;
        case LandscapeKind::Saddle:
            e.loss = w1 * w1 - w2 * w2 + 0.1 * w2 * w2 * w2 * w2;
            e.grad = {2.0 * w1, -2.0 * w2 + 0.4 * w2 * w2 * w2};
            break;
        case LandscapeKind::Plateau: {
            const double r2 = w1 * w1 + w2 * w2;
            const double d = 1.0 + r2;
            e.loss = kPlateauScale * r2 / d;
            const double c = 2.0 * kPlateauScale / (d * d);
            e.grad = {c * w1, c * w2};
            break;
        }
        case LandscapeKind::Obstacle: {
            const double d1 = w1 - kObstacleCx, d2 = w2 - kObstacleCy;
            const double s2 = kObstacleWidth * kObstacleWidth;
            const double bump = kObstacleHeight * std::exp(-(d1 * d1 + d2 * d2) / (2.0 * s2));
            e.loss = 0.5 * (w1 * w1 + w2 * w2) + bump;
            e.grad = {w1 - bump * d1 / s2, w2 - bump * d2 / s2};
            break;
        }
    }
    return e;
}

struct TrajectoryPoint {
    int step;
    double w1, w2, loss;
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    bool diverged = false;
};

/// Deterministic optimizer run on one landscape; emits every iterate and
/// flags divergence (|w| > 1e6 or non-finite loss).
inline Trajectory run_trajectory(LandscapeKind kind, OptimizerState opt, double w1, double w2,
                                 int steps) {
    if (steps < 1) throw ContractError("run_trajectory: steps must be >= 1");
    if (!std::isfinite(w1) || !std::isfinite(w2))
        throw ContractError("run_trajectory: non-finite start");
    Trajectory tr;
    std::vector<Tensor> w{Tensor(Shape{2}, std::vector<double>{w1, w2})};
    {
        const LandscapeEval e0 = landscape_eval(kind, w1, w2);
        tr.points.push_back({0, w1, w2, e0.loss});
    }
    for (int s = 1; s <= steps; ++s) {
        const LandscapeEval e = landscape_eval(kind, w[0][0], w[0][1]);
        std::vector<Tensor> g{Tensor(Shape{2}, std::vector<double>{e.grad[0], e.grad[1]})};
        opt.step(w, g);
        const LandscapeEval en = landscape_eval(kind, w[0][0], w[0][1]);
        tr.points.push_back({s, w[0][0], w[0][1], en.loss});
        const double norm = std::sqrt(w[0][0] * w[0][0] + w[0][1] * w[0][1]);
        if (!std::isfinite(en.loss) || norm > 1e6) {
            tr.diverged = true;
            break;
        }
    }
    return tr;
}

/// CSV schema: header "step,w1,w2,loss", one row per iterate, '.' decimal
/// point regardless of locale.
inline void write_trajectory_csv(const Trajectory& tr, std::ostream& os) {
    os << "step,w1,w2,loss\n";
    char buf[160];
    for (const TrajectoryPoint& p : tr.points) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", p.step, p.w1, p.w2, p.loss);
        os << buf;
    }
}

/// Quick-look P6 heatmap of a landscape with the trajectory overlaid.
inline void write_landscape_ppm(LandscapeKind kind, const Trajectory& tr, const std::string& path,
                                double lo = -2.0, double hi = 2.0, int px = 256) {
    std::vector<double> vals(static_cast<std::size_t>(px) * px);
    double vmin = 1e300, vmax = -1e300;
    for (int i = 0; i < px; ++i)
        for (int j = 0; j < px; ++j) {
            const double w2 = lo + (hi - lo) * j / (px - 1);
            const double w1 = lo + (hi - lo) * i / (px - 1);
            const double v = landscape_eval(kind, w1, w2).loss;
            vals[static_cast<std::size_t>(i) * px + j] = v;
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    std::ofstream os(path, std::ios::binary);
    os << "P6\n" << px << ' ' << px << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(px) * 3);
    auto to_px = [&](double w) {
        return static_cast<int>(std::lround((w - lo) / (hi - lo) * (px - 1)));
    };
    std::vector<char> marked(static_cast<std::size_t>(px) * px, 0);
    for (const TrajectoryPoint& p : tr.points) {
        const int i = to_px(p.w1), j = to_px(p.w2);
        if (i >= 0 && i < px && j >= 0 && j < px) marked[static_cast<std::size_t>(i) * px + j] = 1;
    }
    for (int i = 0; i < px; ++i) {
        for (int j = 0; j < px; ++j) {
            const double t = (vals[static_cast<std::size_t>(i) * px + j] - vmin) /
                             std::max(1e-300, vmax - vmin);
            const unsigned char shade = static_cast<unsigned char>(255.0 * t);
            if (marked[static_cast<std::size_t>(i) * px + j]) {
                row[static_cast<std::size_t>(j) * 3 + 0] = 255;
                row[static_cast<std::size_t>(j) * 3 + 1] = 40;
                row[static_cast<std::size_t>(j) * 3 + 2] = 40;
            } else {
                row[static_cast<std::size_t>(j) * 3 + 0] = shade;
                row[static_cast<std::size_t>(j) * 3 + 1] = shade;
                row[static_cast<std::size_t>(j) * 3 + 2] = shade;
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

} // namespace gradkit
