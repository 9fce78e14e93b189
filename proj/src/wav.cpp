#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mixsynth/blob.hpp"
#include "mixsynth/error.hpp"
#include "mixsynth/io.hpp"

namespace mixsynth::io {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

std::uint32_t u32(const std::string& s, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, s.data() + at, 4);
  return v;
}

std::uint16_t u16(const std::string& s, std::size_t at) {
  std::uint16_t v;
  std::memcpy(&v, s.data() + at, 2);
  return v;
}

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

constexpr std::uint16_t kPcm = 1, kFloat = 3, kExtensible = 0xFFFE;

}  // namespace

dsp::AudioBuffer read_wav(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  const std::string name = path.string();
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0)
    throw ValidationError(name + ": not a RIFF/WAVE file");
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw ValidationError(name + ": chunk '" + id + "' is truncated");
    if (id == "fmt ") {
      if (size < 16) throw ValidationError(name + ": fmt chunk too short");
      format = u16(bytes, body);
      channels = u16(bytes, body + 2);
      rate = u32(bytes, body + 4);
      bits = u16(bytes, body + 14);
      if (format == kExtensible && size >= 26) format = u16(bytes, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ValidationError(name + ": data chunk before fmt chunk");
      if (rate != 16000)
        throw ValidationError(name + ": expected 16000 Hz, found " + std::to_string(rate) +
                              " Hz; resample to 16 kHz mono first (e.g. sox in.wav -r 16000 -c 1 out.wav)");
      if (channels != 1)
        throw ValidationError(name + ": expected 1 channel, found " + std::to_string(channels) +
                              " channels; downmix to mono first (e.g. sox in.wav -c 1 out.wav)");
      dsp::AudioBuffer out;
      if (format == kPcm && bits == 16) {
        out.samples.resize(size / 2);
        for (std::size_t i = 0; i < out.samples.size(); ++i) {
          std::int16_t v;
          std::memcpy(&v, bytes.data() + body + 2 * i, 2);
          out.samples[i] = static_cast<double>(v) / 32767.0;
        }
      } else if (format == kFloat && bits == 32) {
        out.samples.resize(size / 4);
        for (std::size_t i = 0; i < out.samples.size(); ++i) {
          float v;
          std::memcpy(&v, bytes.data() + body + 4 * i, 4);
          if (!std::isfinite(v)) throw ValidationError(name + ": non-finite sample at index " + std::to_string(i));
          out.samples[i] = v;
        }
      } else {
        throw ValidationError(name + ": unsupported encoding (format " + std::to_string(format) + ", " +
                              std::to_string(bits) + " bits); use PCM16 or float32");
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw ValidationError(name + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const dsp::AudioBuffer& x, WavFormat format) {
  if (x.sample_rate != dsp::kSampleRate) throw ValidationError("write_wav: only 16000 Hz audio is supported");
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(x.size() * (bits / 8));
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put<std::uint32_t>(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, format == WavFormat::pcm16 ? kPcm : kFloat);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, 16000);
  put<std::uint32_t>(out, 16000u * (bits / 8));
  put<std::uint16_t>(out, bits / 8);
  put<std::uint16_t>(out, bits);
  out += "data";
  put<std::uint32_t>(out, data_bytes);
  for (double s : x.samples) {
    if (format == WavFormat::pcm16) {
      put<std::int16_t>(out, static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0)));
    } else {
      put<float>(out, static_cast<float>(s));
    }
  }
  write_text(path, out);
}

}  // namespace mixsynth::io
