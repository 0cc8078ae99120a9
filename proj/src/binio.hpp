#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "hsiseg/error.hpp"

namespace hsi::detail {

template <typename U>
U swap_bytes(U v) {
    char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    std::reverse(b, b + sizeof(U));
    std::memcpy(&v, b, sizeof(U));
    return v;
}

template <typename U>
void put_le(std::string& out, U v) {
    if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

template <typename U>
U get_le(const char* p) {
    U v;
    std::memcpy(&v, p, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
    return v;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void dump(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void check_magic(const std::string& bytes, const char (&magic)[5], const std::filesystem::path& path) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0) {
        throw BadMagicError("'" + path.string() + "' does not start with magic " + magic);
    }
}

inline void need(const std::string& bytes, std::uint64_t count, const std::filesystem::path& path, const char* what) {
    if (bytes.size() < count) {
        throw TruncatedError("'" + path.string() + "' truncated: " + what + " needs " + std::to_string(count) +
                             " bytes, file has " + std::to_string(bytes.size()));
    }
}

} // namespace hsi::detail
