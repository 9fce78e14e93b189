#pragma once

// Timbre encoder (MFCC -> z) and decoder ((f0, z, loudness) -> control
// signals), both per-frame MLPs, plus the versioned model file.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mixsynth/autodiff.hpp"
#include "mixsynth/dsp.hpp"
#include "mixsynth/synth.hpp"

namespace mixsynth::nets {

inline constexpr std::string_view kModelVersion = "mixsynth-model/1";
/// Scale of the z rows of the first decoder layer relative to Glorot at initialisation.
inline constexpr double kLatentInitGain = 0.1;

/// Framewise synthesis parameters of one source. Loudness is in model
/// units (bels, i.e. dB / 10), so -6 is roughly -60 dB.
struct SynthParams {
  std::vector<double> f0;  // Hz, T
  Tensor z;                // T x D
  std::vector<double> loudness;

  std::size_t frames() const noexcept { return f0.size(); }
  std::size_t latent_dim() const noexcept { return z.rank() == 2 ? z.cols() : 0; }
  /// Throws ValidationError on misaligned axes, a wrong latent width or non-finite values.
  void validate(std::size_t latent_dim) const;
};

struct ModelConfig {
  double sample_rate = dsp::kSampleRate;
  double hop_ms = 32.0;
  std::size_t n_harmonics = 64;
  std::size_t n_noise_bands = 65;
  std::size_t latent_dim = 16;
  std::size_t decoder_hidden = 256;
  std::size_t decoder_layers = 3;
  std::size_t encoder_hidden = 256;
  std::size_t n_mfcc = 30;
  std::size_t encoder_mels = 64;
  std::size_t reverb_length = 8000;
  bool reverb_enabled = false;

  std::size_t hop() const { return dsp::ms_to_samples(hop_ms, sample_rate); }
  std::size_t decoder_inputs() const noexcept { return latent_dim + 2; }
  synth::SynthConfig synth() const { return {sample_rate, hop(), n_harmonics, n_noise_bands}; }
  dsp::MfccConfig encoder_mfcc() const;
  void validate() const;
};

struct Dense {
  Tensor weight;  // in x out
  Tensor bias;    // out
};

struct SynthModel {
  ModelConfig config;
  std::vector<Dense> encoder;  // MFCC -> hidden -> D
  std::vector<Dense> decoder;  // hidden stack
  Dense amplitude_head;
  Dense harmonic_head;
  Dense noise_head;
  synth::ReverbIR reverb;

  /// Glorot-uniform weights (z inputs scaled by kLatentInitGain), zero biases, dry reverb.
  static SynthModel initialize(const ModelConfig& config, std::uint64_t seed);
  void validate() const;
  /// Network weight tensors in a fixed order (the reverb taps are separate).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

struct BoundDense {
  ad::DiffValue weight;
  ad::DiffValue bias;
};

/// A model's weights recorded as graph leaves.
struct BoundModel {
  const SynthModel* model = nullptr;
  std::vector<BoundDense> encoder;
  std::vector<BoundDense> decoder;
  BoundDense amplitude_head;
  BoundDense harmonic_head;
  BoundDense noise_head;
  ad::DiffValue reverb;            // invalid when reverb is disabled
  std::vector<ad::DiffValue> all;  // same order as SynthModel::parameters(), then the reverb if enabled
};

/// Leaves are variables when `trainable`, constants otherwise.
BoundModel bind(ad::DiffGraph& g, const SynthModel& model, bool trainable);

/// Decoder on graph values: f0 (T), z (T x D), loudness (T).
synth::DiffControls decode(const BoundModel& m, ad::DiffValue f0, ad::DiffValue z, ad::DiffValue loudness);
/// Encoder on a T x n_mfcc feature matrix.
ad::DiffValue encode(const BoundModel& m, ad::DiffValue features);
/// Full source synthesizer: decode then synthesize.
ad::DiffValue render(const BoundModel& m, ad::DiffValue f0, ad::DiffValue z, ad::DiffValue loudness,
                     std::shared_ptr<const ad::NoiseExcitation> excitation, std::size_t n_samples);

/// Requires a length that is a whole number of hops; returns T x D.
Tensor encode_timbre(const dsp::AudioBuffer& x, const SynthModel& model);
synth::ControlSignals decode(const SynthParams& params, const SynthModel& model);

std::string model_to_json(const SynthModel& model);
/// Throws SchemaError (malformed JSON or schema mismatch); never returns a partial model.
SynthModel model_from_json(std::string_view text);
void save_model(const SynthModel& model, const std::filesystem::path& path);
SynthModel load_model(const std::filesystem::path& path);

}  // namespace mixsynth::nets
