#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace textdestroyer::storage {

// Raw little-endian float64 arrays, one file per array.
void write_f64(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64(const std::filesystem::path& path, std::size_t expected_count);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// FNV-1a over raw bytes, rendered as 16 hex digits.
std::string fnv1a_hex(std::span<const unsigned char> bytes);

}  // namespace textdestroyer::storage
