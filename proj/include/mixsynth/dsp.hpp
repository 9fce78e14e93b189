#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mixsynth/tensor.hpp"

namespace mixsynth::dsp {

inline constexpr double kSampleRate = 16000.0;

/// Mono audio at a fixed sample rate.
struct AudioBuffer {
  std::vector<double> samples;
  double sample_rate = kSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  double seconds() const noexcept { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Frame lengths of a multiscale STFT; each hop is hop_fraction of its frame.
struct StftConfig {
  std::vector<double> frame_ms;
  double hop_fraction = 0.5;

  /// Hann frames of 8, 16, 32, 64, 128 and 256 ms with half-frame hops.
  static StftConfig six_scale();
  /// Throws ValidationError when a frame or hop is not a whole number of samples.
  void validate(double sample_rate = kSampleRate) const;
};

/// Converts a duration to samples; throws ValidationError unless positive and whole.
std::size_t ms_to_samples(double ms, double sample_rate = kSampleRate);

/// Periodic Hann window (sums to a constant at 50% overlap).
std::vector<double> hann_window(std::size_t length);

/// Number of frames starting at multiples of `hop`: max(1, ceil(n / hop)).
std::size_t frame_count(std::size_t n_samples, std::size_t hop);

/// Hann-windowed magnitude spectrogram, frames x (frame/2 + 1). Frame t covers
/// samples [t hop, t hop + frame); the tail is zero-padded.
Tensor stft_magnitude(std::span<const double> x, std::size_t frame, std::size_t hop);
Tensor stft_magnitude(const AudioBuffer& x, double frame_ms, double hop_ms);

/// IEC 61672 A-weighting gain in dB at frequency f (-inf at DC).
double a_weighting_db(double hz);

inline constexpr double kLoudnessFloorDb = -120.0;

/// A-weighted power per frame in dB relative to a unit mean-square signal,
/// floored at -120 dB. Defaults: 64 ms frames at a 32 ms hop.
std::vector<double> a_weighted_loudness(const AudioBuffer& x, double hop_ms = 32.0, double frame_ms = 64.0);

/// HTK-mel triangular filters, returned as (n_fft/2 + 1) x n_mels.
Tensor mel_filterbank(std::size_t n_fft, std::size_t n_mels, double fmin, double fmax,
                      double sample_rate = kSampleRate);

/// First n_coeffs outputs of the orthonormal DCT-II of `values`.
std::vector<double> dct_ortho(std::span<const double> values, std::size_t n_coeffs);

struct MfccConfig {
  double frame_ms = 128.0;
  double hop_ms = 32.0;
  std::size_t n_mels = 128;
  double fmin = 20.0;
  double fmax = 8000.0;
  std::size_t n_coeffs = 30;

  /// 128 ms / 32 ms hop / 128 mels over 20-8000 Hz / 30 coefficients.
  static MfccConfig evaluation() { return {}; }
  /// Timbre-encoder front end: 64 ms / 32 ms hop / 64 mels / 30 coefficients.
  static MfccConfig encoder() { return {64.0, 32.0, 64, 20.0, 8000.0, 30}; }
};

/// T x n_coeffs cepstra of the natural-log mel magnitude spectrogram.
Tensor mfcc(const AudioBuffer& x, const MfccConfig& cfg);

/// Linear interpolation between frame centres first_center + t hop, holding
/// the first and last values beyond the outermost centres.
std::vector<double> upsample_framewise(std::span<const double> values, std::size_t hop, std::size_t total,
                                       std::size_t first_center = 0);

/// Normalised-autocorrelation pitch track, one value per 32 ms hop.
/// Frames without a clear period take the nearest voiced estimate
/// (or `fallback_hz` when none is voiced).
std::vector<double> estimate_f0(const AudioBuffer& x, double hop_ms = 32.0, double fmin = 50.0,
                                double fmax = 1000.0, double fallback_hz = 220.0);

}  // namespace mixsynth::dsp
