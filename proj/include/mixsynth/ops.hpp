#pragma once

// Primitive differentiable op-kinds. Elementwise binary ops require equal
// shapes; use broadcast() to lift a scalar. Time is always axis 0.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mixsynth/autodiff.hpp"

namespace mixsynth::ad {

DiffValue add(DiffValue a, DiffValue b);
DiffValue sub(DiffValue a, DiffValue b);
DiffValue mul(DiffValue a, DiffValue b);
DiffValue div(DiffValue a, DiffValue b);

/// Repeats a one-element value over `shape`.
DiffValue broadcast(DiffValue scalar, Tensor::Shape shape);
DiffValue scale(DiffValue a, double factor);
DiffValue offset(DiffValue a, double shift);

DiffValue exp(DiffValue a);
/// log(max(a, floor)); the gradient is zero where the floor is active.
DiffValue log(DiffValue a, double floor = 1e-6);
DiffValue sin(DiffValue a);
DiffValue sigmoid(DiffValue a);
/// x * sigmoid(x)
DiffValue silu(DiffValue a);
DiffValue power(DiffValue a, double exponent);

/// Inclusive prefix sum along axis 0.
DiffValue cumsum(DiffValue a);

/// Piecewise-linear interpolation along axis 0 from frame centres
/// first_center + t * hop onto `total` samples, holding the end values.
DiffValue upsample(DiffValue frames, std::size_t hop, std::size_t total, std::size_t first_center);

/// x[m x k] * w[k x n] + b[n]. A rank-1 x is treated as one row.
DiffValue affine(DiffValue x, DiffValue w, DiffValue b);

/// Multiplies rows by a constant matrix: x[m x k] * m[k x n].
DiffValue matmul_const(DiffValue x, const Tensor& matrix);
/// Projection of a magnitude spectrogram onto mel bands (filterbank is bins x mels).
inline DiffValue mel_project(DiffValue spectrogram, const Tensor& filterbank) {
  return matmul_const(spectrogram, filterbank);
}

/// Slices a rank-1 signal into ceil(N / hop) windows of `length`; the tail is zero-padded.
DiffValue frame(DiffValue signal, std::size_t length, std::size_t hop);

/// |DFT(window * row)| for every row, bins 0..L/2. Magnitude is
/// sqrt(re^2 + im^2 + 1e-24) so the gradient stays finite at zero.
DiffValue dft_magnitude(DiffValue frames, std::span<const double> window);

DiffValue sum(DiffValue a);
/// sum |a - b|
DiffValue l1_distance(DiffValue a, DiffValue b);

DiffValue softmax_rows(DiffValue a);
/// Zero-mean unit-variance normalisation of every row (no learned gain).
DiffValue layer_norm_rows(DiffValue a, double eps = 1e-5);
DiffValue concat_cols(std::span<const DiffValue> parts);
DiffValue slice_cols(DiffValue a, std::size_t begin, std::size_t end);
/// m[t, k] * v[t]
DiffValue scale_rows(DiffValue m, DiffValue v);

struct HarmonicBankConfig {
  std::size_t n_samples = 0;
  std::size_t hop = 0;
  std::size_t first_center = 0;
  double sample_rate = 16000.0;
};

/// Additive oscillator bank. f0 (T) in Hz and per-harmonic amplitudes
/// (T x K) are interpolated linearly between frame centres; the phase of
/// harmonic k is 2 pi k sum_{m<n} f0(m) / sr, so every partial starts at
/// phase 0. Partials at or above Nyquist contribute nothing.
DiffValue harmonic_bank(DiffValue f0, DiffValue amplitudes, const HarmonicBankConfig& cfg);

/// Hann-windowed white-noise frames, the excitation of filtered_noise.
/// Frame t spans [first_center + (t-1) hop, first_center + (t+1) hop).
struct NoiseExcitation {
  std::size_t frames = 0;
  std::size_t hop = 0;
  std::size_t first_center = 0;
  std::vector<double> samples;  // frames x (2 hop), row-major

  std::size_t frame_length() const noexcept { return 2 * hop; }
  static NoiseExcitation generate(std::size_t frames, std::size_t hop, std::size_t first_center,
                                  std::uint64_t seed);
};

/// Filters excitation frame t with the FIR taps[t, :] (centred, zero delay)
/// and overlap-adds the results into `n_samples` output samples.
DiffValue filtered_noise(DiffValue taps, std::shared_ptr<const NoiseExcitation> excitation,
                         std::size_t n_samples);

/// Causal linear convolution truncated to the length of x. The first tap of
/// `ir` is treated as a fixed 1 (dry path) and receives no gradient.
DiffValue reverb(DiffValue x, DiffValue ir);

}  // namespace mixsynth::ad
