#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace crossview {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

std::string read_file(const std::filesystem::path& path);

// Writes via temp file + rename so readers never observe partial output.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::string hex64(std::uint64_t v);

// Shortest-roundtrip decimal for doubles; used everywhere a float reaches
// text output so repeated runs stay byte-identical.
std::string format_double(double v);

void append_f32(std::string& out, float v);
void append_u32(std::string& out, std::uint32_t v);
float read_f32(const std::string& bytes, std::size_t offset);
std::uint32_t read_u32(const std::string& bytes, std::size_t offset);

}  // namespace crossview
