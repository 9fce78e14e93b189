#include "mixsynth/blob.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mixsynth/error.hpp"

namespace mixsynth::io {

namespace {

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}

}  // namespace

std::string encode_f64(std::span<const double> values) {
  std::vector<unsigned char> raw(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(raw.data() + 8 * i, &bits, 8);
  }
  std::string out(4 * ((raw.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), raw.data(), static_cast<int>(raw.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<double> decode_f64(std::string_view text, std::size_t expected, std::string_view field) {
  const std::string where(field);
  if (text.size() % 4 != 0) throw SchemaError(where + ": base64 length is not a multiple of 4");
  std::vector<unsigned char> raw(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(raw.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw SchemaError(where + ": invalid base64");
  std::size_t bytes = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the bytes produced by '=' padding
  if (!text.empty() && text.back() == '=') --bytes;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --bytes;
  if (bytes != expected * 8) {
    throw SchemaError(where + ": expected " + std::to_string(expected) + " float64 values, found " +
                      std::to_string(bytes / 8) + (bytes % 8 ? " (plus a partial value)" : ""));
  }
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, raw.data() + 8 * i, 8);
    out[i] = std::bit_cast<double>(to_le(bits));
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw RuntimeFailure("write failed: " + path.string());
}

}  // namespace mixsynth::io
