#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "optfs/common.hpp"

namespace optfs {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
    out.flush();
    if (!out) throw DataError("write failed: " + path);
}

inline bool file_exists(const std::string& path) {
    std::ifstream in(path);
    return static_cast<bool>(in);
}

// little-endian encode/decode for the binary formats
template <typename T>
void put_le(std::string& buf, T v) {
    for (size_t i = 0; i < sizeof(T); ++i)
        buf.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& buf, size_t& off) {
    if (off + sizeof(T) > buf.size()) throw DataError("truncated binary file");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    off += sizeof(T);
    return static_cast<T>(v);
}

inline void put_f64(std::string& buf, double d) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(d));
    std::memcpy(&bits, &d, sizeof(bits));
    put_le<uint64_t>(buf, bits);
}

inline double get_f64(const std::string& buf, size_t& off) {
    const uint64_t bits = get_le<uint64_t>(buf, off);
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
}

inline void put_string(std::string& buf, const std::string& s) {
    put_le<uint32_t>(buf, static_cast<uint32_t>(s.size()));
    buf.append(s);
}

inline std::string get_string(const std::string& buf, size_t& off) {
    const uint32_t len = get_le<uint32_t>(buf, off);
    if (off + len > buf.size()) throw DataError("truncated binary file");
    std::string s = buf.substr(off, len);
    off += len;
    return s;
}

}  // namespace optfs
