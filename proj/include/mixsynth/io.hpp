#pragma once

// WAV files (mono, 16 kHz, PCM16 or float32) and the parameter file.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mixsynth/dsp.hpp"
#include "mixsynth/nets.hpp"

namespace mixsynth::io {

enum class WavFormat { pcm16, float32 };

/// Throws ValidationError for other rates, channel counts or encodings.
dsp::AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const dsp::AudioBuffer& x, WavFormat format = WavFormat::float32);

inline constexpr std::string_view kParamVersion = "mixsynth-params/1";

struct ParamFile {
  double sample_rate = dsp::kSampleRate;
  double hop_ms = 32.0;
  std::vector<nets::SynthParams> sources;

  std::size_t frames() const { return sources.empty() ? 0 : sources.front().frames(); }
  std::size_t latent_dim() const { return sources.empty() ? 0 : sources.front().latent_dim(); }
  void validate() const;
};

std::string params_to_json(const ParamFile& file);
ParamFile params_from_json(std::string_view text);
void save_params(const ParamFile& file, const std::filesystem::path& path);
ParamFile load_params(const std::filesystem::path& path);

}  // namespace mixsynth::io
