#pragma once

#include <array>
#include <cmath>

#include "gradkit/idx.hpp"
#include "gradkit/rng.hpp"

namespace gradkit {

// Deterministic synthetic 28x28 digit images rendered from a 5x7 bitmap font
// with random placement, scale and a small rotation. Useful for demos and
// self-contained end-to-end runs when no real IDX dataset is at hand; the
// files written from these are ordinary IDX files.

namespace digit_detail {

// clang-format off
constexpr std::array<std::array<unsigned char, 7>, 10> kGlyphs{{
    {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}, // 0
    {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}, // 1
    {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}, // 2
    {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}, // 3
    {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}, // 4
    {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}, // 5
    {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}, // 6
    {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}, // 7
    {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}, // 8
    // straight-tailed 9: a 9 whose 180-degree rotation is an exact copy of
    // the 6 glyph would be unclassifiable for any rotation-invariant model
    {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x01, 0x01}, // 9
}};
// clang-format on

inline double glyph_at(int digit, double gi, double gj) {
    // bilinear sample of the 5x7 bitmap, zero outside
    const int i0 = static_cast<int>(std::floor(gi));
    const int j0 = static_cast<int>(std::floor(gj));
    const double a = gi - i0, b = gj - j0;
    auto bit = [&](int i, int j) -> double {
        if (i < 0 || i >= 7 || j < 0 || j >= 5) return 0.0;
        return (kGlyphs[static_cast<std::size_t>(digit)][static_cast<std::size_t>(i)] >> (4 - j)) & 1
                   ? 1.0
                   : 0.0;
    };
    return (1 - a) * (1 - b) * bit(i0, j0) + (1 - a) * b * bit(i0, j0 + 1) +
           a * (1 - b) * bit(i0 + 1, j0) + a * b * bit(i0 + 1, j0 + 1);
}

} // namespace digit_detail

/// n samples with labels cycling 0..9; fully determined by the seed.
inline Dataset make_digit_dataset(int n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.images = Tensor::zeros(Shape{n, 1, 28, 28});
    d.labels.reserve(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        const int digit = s % 10;
        d.labels.push_back(digit);
        const double sc = rng.uniform(2.6, 3.2);
        const double di = rng.uniform(-2.0, 2.0);
        const double dj = rng.uniform(-2.0, 2.0);
        const double theta = rng.uniform(-0.26, 0.26);
        const double intensity = rng.uniform(0.75, 1.0);
        const double co = std::cos(theta), si = std::sin(theta);
        double* img = d.images.data() + static_cast<std::int64_t>(s) * 28 * 28;
        for (int i = 0; i < 28; ++i) {
            for (int j = 0; j < 28; ++j) {
                const double p1 = i - 13.5 - di, p2 = j - 13.5 - dj;
                const double q1 = co * p1 - si * p2;
                const double q2 = si * p1 + co * p2;
                const double gi = q1 / sc + 3.0;
                const double gj = q2 / sc + 2.0;
                double v = intensity * digit_detail::glyph_at(digit, gi, gj);
                v += 0.06 * rng.uniform01();
                img[static_cast<std::size_t>(i) * 28 + j] = std::min(1.0, std::max(0.0, v));
            }
        }
    }
    return d;
}

/// Writes the dataset as a standard IDX image/label file pair.
inline void write_digit_idx(const Dataset& d, const std::string& images_path,
                            const std::string& labels_path) {
    const int N = d.images.dim(0), H = d.images.dim(2), W = d.images.dim(3);
    std::vector<unsigned char> pix(static_cast<std::size_t>(N) * H * W);
    for (std::size_t i = 0; i < pix.size(); ++i)
        pix[i] = static_cast<unsigned char>(std::lround(d.images[static_cast<std::int64_t>(i)] * 255.0));
    write_idx_images(images_path, pix, N, H, W);
    std::vector<unsigned char> lab(d.labels.begin(), d.labels.end());
    write_idx_labels(labels_path, lab);
}

} // namespace gradkit
