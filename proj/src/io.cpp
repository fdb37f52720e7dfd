#include "crossview/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "crossview/errors.hpp"

namespace crossview {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file: " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read failed: " + path.string());
    }
    return bytes;
}

void atomic_write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open file for writing: " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("rename failed: " + tmp.string() + " -> " + path.string() + ": " + ec.message());
    }
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::string format_double(double v) {
    // %.17g always round-trips; trim to the shortest representation that does.
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) {
            break;
        }
    }
    return std::string(buf);
}

void append_f32(std::string& out, float v) {
    char raw[4];
    std::memcpy(raw, &v, 4);
    out.append(raw, 4);
}

void append_u32(std::string& out, std::uint32_t v) {
    char raw[4];
    std::memcpy(raw, &v, 4);
    out.append(raw, 4);
}

float read_f32(const std::string& bytes, std::size_t offset) {
    if (offset + 4 > bytes.size()) {
        throw IoError("unexpected end of file while reading float");
    }
    float v;
    std::memcpy(&v, bytes.data() + offset, 4);
    return v;
}

std::uint32_t read_u32(const std::string& bytes, std::size_t offset) {
    if (offset + 4 > bytes.size()) {
        throw IoError("unexpected end of file while reading u32");
    }
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + offset, 4);
    return v;
}

}  // namespace crossview
