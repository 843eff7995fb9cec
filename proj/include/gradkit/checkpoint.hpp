#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gradkit/tensor.hpp"

namespace gradkit {

/// Named view of a model parameter for checkpoint IO and optimizers.
struct ParamRef {
    std::string name;
    Tensor* tensor;
};

namespace ckpt_detail {

constexpr char kMagic[8] = {'G', 'K', 'C', 'K', 'P', 'T', '0', '\n'};
constexpr std::uint32_t kVersion = 1;

inline std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline void put_be32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v >> 24));
    out.push_back(static_cast<char>(v >> 16));
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v));
}

inline void put_be64(std::string& out, std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<char>(v >> s));
}

inline std::uint32_t get_be32(const std::string& buf, std::size_t& off) {
    if (off + 4 > buf.size()) throw CorruptionError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(buf[off++]);
    return v;
}

inline std::uint64_t get_be64(const std::string& buf, std::size_t& off) {
    if (off + 8 > buf.size()) throw CorruptionError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | static_cast<unsigned char>(buf[off++]);
    return v;
}

} // namespace ckpt_detail

/// Versioned flat binary checkpoint: magic, version, tensor count, then per
/// tensor (name length, name, rank, dims, big-endian binary64 payload), and a
/// trailing FNV-1a checksum of everything before it. Doubles round-trip
/// bit-exactly.
inline void checkpoint_save(const std::vector<ParamRef>& params, const std::string& path) {
    using namespace ckpt_detail;
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put_be32(buf, kVersion);
    put_be32(buf, static_cast<std::uint32_t>(params.size()));
    for (const ParamRef& p : params) {
        put_be32(buf, static_cast<std::uint32_t>(p.name.size()));
        buf.append(p.name);
        put_be32(buf, static_cast<std::uint32_t>(p.tensor->rank()));
        for (int d = 0; d < p.tensor->rank(); ++d)
            put_be64(buf, static_cast<std::uint64_t>(p.tensor->dim(d)));
        for (std::int64_t i = 0; i < p.tensor->numel(); ++i) {
            std::uint64_t bits;
            const double v = (*p.tensor)[i];
            std::memcpy(&bits, &v, 8);
            put_be64(buf, bits);
        }
    }
    put_be64(buf, fnv1a(reinterpret_cast<const unsigned char*>(buf.data()), buf.size()));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

/// Restores into an existing parameter list; names, order and dims must all
/// match, and the first mismatch is reported.
inline void checkpoint_load(const std::vector<ParamRef>& params, const std::string& path) {
    using namespace ckpt_detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    std::string buf = ss.str();
    if (buf.size() < sizeof(kMagic) + 4 + 4 + 8) throw CorruptionError("checkpoint truncated");
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError("not a checkpoint file");
    const std::size_t body = buf.size() - 8;
    std::size_t off = body;
    const std::uint64_t stored = get_be64(buf, off);
    const std::uint64_t actual = fnv1a(reinterpret_cast<const unsigned char*>(buf.data()), body);
    if (stored != actual) throw CorruptionError("checkpoint checksum mismatch");
    off = sizeof(kMagic);
    const std::uint32_t version = get_be32(buf, off);
    if (version != kVersion)
        throw FormatError("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kVersion));
    const std::uint32_t count = get_be32(buf, off);
    if (count != params.size())
        throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(params.size()));
    for (const ParamRef& p : params) {
        const std::uint32_t nlen = get_be32(buf, off);
        if (off + nlen > body) throw CorruptionError("checkpoint truncated");
        const std::string name = buf.substr(off, nlen);
        off += nlen;
        if (name != p.name)
            throw FormatError("tensor name mismatch: checkpoint has '" + name + "', model expects '" +
                              p.name + "'");
        const std::uint32_t rank = get_be32(buf, off);
        std::vector<int> dims;
        for (std::uint32_t d = 0; d < rank; ++d)
            dims.push_back(static_cast<int>(get_be64(buf, off)));
        const Shape shape(dims);
        if (shape != p.tensor->shape())
            throw FormatError("tensor '" + name + "' has shape " + shape.str() +
                              ", model expects " + p.tensor->shape().str());
        for (std::int64_t i = 0; i < p.tensor->numel(); ++i) {
            const std::uint64_t bits = get_be64(buf, off);
            double v;
            std::memcpy(&v, &bits, 8);
            (*p.tensor)[i] = v;
        }
    }
}

} // namespace gradkit
