#pragma once

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tensor.hpp"

namespace fading {

static_assert(std::endian::native == std::endian::little,
              "blob format is little-endian float32; big-endian hosts unsupported");

inline void write_f32_blob(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_data("cannot open blob for writing: " + path.string());
    os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!os) throw_data("short write: " + path.string());
}

inline Tensor read_f32_blob(const std::filesystem::path& path, std::vector<int> shape) {
    Tensor t(std::move(shape));
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_data("cannot open blob: " + path.string());
    is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (is.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(float)))
        throw_data("blob size mismatch: " + path.string());
    return t;
}

// FNV-1a over the raw float bytes; used for frozen-parameter audits and
// determinism checks.
inline std::uint64_t tensor_hash(const Tensor& t) {
    std::uint64_t h = 1469598103934665603ull;
    const unsigned char* p = reinterpret_cast<const unsigned char*>(t.ptr());
    for (std::size_t i = 0; i < t.numel() * sizeof(float); ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace fading
