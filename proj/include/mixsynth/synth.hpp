#pragma once

// Spectral-modeling synthesizer: harmonic oscillator bank plus frame-wise
// filtered noise, optionally followed by a convolution reverb. Frame t of
// the control signals is centred on sample (t + 1) * hop.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mixsynth/autodiff.hpp"
#include "mixsynth/dsp.hpp"
#include "mixsynth/ops.hpp"

namespace mixsynth::synth {

struct SynthConfig {
  double sample_rate = dsp::kSampleRate;
  std::size_t hop = 512;
  std::size_t n_harmonics = 64;
  std::size_t n_noise_bands = 65;

  std::size_t fir_length() const noexcept { return 2 * (n_noise_bands - 1); }
  std::size_t first_center() const noexcept { return hop; }
  ad::HarmonicBankConfig bank(std::size_t n_samples) const {
    return {n_samples, hop, first_center(), sample_rate};
  }
};

/// Per-frame decoder outputs driving the synthesizer.
struct ControlSignals {
  std::vector<double> amplitude;   // T, positive
  Tensor harmonic_distribution;    // T x K, rows on the simplex
  Tensor noise_magnitudes;         // T x M, nonnegative

  std::size_t frames() const noexcept { return amplitude.size(); }
  /// Throws ValidationError on misaligned or out-of-range fields.
  void validate() const;
};

struct ReverbIR {
  std::vector<double> taps;  // taps[0] is the dry path and is always 1
  bool enabled = false;

  static ReverbIR dry(std::size_t length = 8000);
};

/// Graph handles for ControlSignals. amplitude is T x 1.
struct DiffControls {
  ad::DiffValue amplitude;
  ad::DiffValue distribution;
  ad::DiffValue noise;
};

/// Maps M noise-band magnitudes to 2(M-1) FIR taps: zero-phase inverse DFT,
/// rotated to be causal, then Hann-windowed. Returned as M x taps.
const Tensor& noise_fir_matrix(std::size_t n_bands);

std::shared_ptr<const ad::NoiseExcitation> make_excitation(std::size_t frames, std::uint64_t seed,
                                                           const SynthConfig& cfg);

ad::DiffValue harmonic_part(ad::DiffValue f0, const DiffControls& controls, std::size_t n_samples,
                            const SynthConfig& cfg);
ad::DiffValue noise_part(const DiffControls& controls, std::shared_ptr<const ad::NoiseExcitation> excitation,
                         std::size_t n_samples, const SynthConfig& cfg);
/// reverb(harmonic + noise); `ir` may be an invalid DiffValue when reverb is off.
ad::DiffValue synthesize(ad::DiffValue f0, const DiffControls& controls, ad::DiffValue ir,
                         std::shared_ptr<const ad::NoiseExcitation> excitation, std::size_t n_samples,
                         const SynthConfig& cfg);

dsp::AudioBuffer harmonic_synth(std::span<const double> f0, const ControlSignals& controls, std::size_t n_samples,
                                const SynthConfig& cfg);
dsp::AudioBuffer noise_synth(const Tensor& noise_magnitudes, std::size_t n_samples, std::uint64_t seed,
                             const SynthConfig& cfg);
dsp::AudioBuffer apply_reverb(const dsp::AudioBuffer& x, const ReverbIR& ir);
dsp::AudioBuffer synthesize(std::span<const double> f0, const ControlSignals& controls, const ReverbIR& ir,
                            std::size_t n_samples, std::uint64_t seed, const SynthConfig& cfg);

}  // namespace mixsynth::synth
