#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gradkit/tensor.hpp"

namespace gradkit {

constexpr std::uint32_t kIdxImagesMagic = 2051; // 0x00000803
constexpr std::uint32_t kIdxLabelsMagic = 2049; // 0x00000801

/// Images scaled into [0,1] (byte / 255) plus integer labels.
struct Dataset {
    Tensor images; // N x C x H x W
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }

    Tensor image(int i) const {
        const int C = images.dim(1), H = images.dim(2), W = images.dim(3);
        const std::int64_t n = static_cast<std::int64_t>(C) * H * W;
        Tensor out = Tensor::zeros(Shape{C, H, W});
        std::copy(images.data() + i * n, images.data() + (i + 1) * n, out.data());
        return out;
    }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of file while reading header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace detail

struct IdxHeader {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
};

inline IdxHeader read_idx_header(std::istream& is) {
    IdxHeader h;
    h.magic = detail::read_be32(is);
    if (h.magic != kIdxImagesMagic && h.magic != kIdxLabelsMagic)
        throw FormatError("bad IDX magic " + std::to_string(h.magic));
    const int ndims = static_cast<int>(h.magic & 0xff) >> 0 & 0x0f;
    // magic low byte encodes the dimension count: 3 for images, 1 for labels
    const int expect = h.magic == kIdxImagesMagic ? 3 : 1;
    (void)ndims;
    for (int i = 0; i < expect; ++i) h.dims.push_back(detail::read_be32(is));
    return h;
}

/// Big-endian IDX image file (magic 2051, dims [N,H,W]); pixel bytes are
/// scaled by 1/255 into a N x 1 x H x W tensor.
inline Tensor load_idx_images(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    IdxHeader h = read_idx_header(is);
    if (h.magic != kIdxImagesMagic)
        throw FormatError("'" + path + "' is not an IDX image file (magic " +
                          std::to_string(h.magic) + ")");
    const int N = static_cast<int>(h.dims[0]), H = static_cast<int>(h.dims[1]),
              W = static_cast<int>(h.dims[2]);
    const std::int64_t total = static_cast<std::int64_t>(N) * H * W;
    std::vector<unsigned char> bytes(static_cast<std::size_t>(total));
    is.read(reinterpret_cast<char*>(bytes.data()), total);
    if (is.gcount() != total) throw IoError("'" + path + "' truncated");
    Tensor out = Tensor::zeros(Shape{N, 1, H, W});
    for (std::int64_t i = 0; i < total; ++i) out[i] = bytes[static_cast<std::size_t>(i)] / 255.0;
    return out;
}

/// Big-endian IDX label file (magic 2049, dims [N]).
inline std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    IdxHeader h = read_idx_header(is);
    if (h.magic != kIdxLabelsMagic)
        throw FormatError("'" + path + "' is not an IDX label file (magic " +
                          std::to_string(h.magic) + ")");
    const int N = static_cast<int>(h.dims[0]);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(N));
    is.read(reinterpret_cast<char*>(bytes.data()), N);
    if (is.gcount() != N) throw IoError("'" + path + "' truncated");
    std::vector<int> labels(bytes.begin(), bytes.end());
    return labels;
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    Dataset d;
    d.images = load_idx_images(images_path);
    d.labels = load_idx_labels(labels_path);
    if (d.images.dim(0) != static_cast<int>(d.labels.size()))
        throw FormatError("image/label counts disagree (" + std::to_string(d.images.dim(0)) +
                          " vs " + std::to_string(d.labels.size()) + ")");
    return d;
}

inline void write_idx_images(const std::string& path, const std::vector<unsigned char>& pixels,
                             int N, int H, int W) {
    if (static_cast<std::int64_t>(pixels.size()) != static_cast<std::int64_t>(N) * H * W)
        throw ShapeError("write_idx_images: byte count mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    detail::write_be32(os, kIdxImagesMagic);
    detail::write_be32(os, static_cast<std::uint32_t>(N));
    detail::write_be32(os, static_cast<std::uint32_t>(H));
    detail::write_be32(os, static_cast<std::uint32_t>(W));
    os.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
}

inline void write_idx_labels(const std::string& path, const std::vector<unsigned char>& labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    detail::write_be32(os, kIdxLabelsMagic);
    detail::write_be32(os, static_cast<std::uint32_t>(labels.size()));
    os.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
}

} // namespace gradkit
