#pragma once

// Base64 encoding of little-endian float64 arrays, shared by the JSON file formats.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mixsynth::io {

std::string encode_f64(std::span<const double> values);
/// Throws SchemaError naming `field` on malformed input or a length other than `expected`.
std::vector<double> decode_f64(std::string_view text, std::size_t expected, std::string_view field);

/// Whole-file helpers; a missing input raises ValidationError, a failed write RuntimeFailure.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace mixsynth::io
