#include "mixsynth/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mixsynth/error.hpp"
#include "mixsynth/fft.hpp"

namespace mixsynth::dsp {

StftConfig StftConfig::six_scale() { return StftConfig{{8.0, 16.0, 32.0, 64.0, 128.0, 256.0}, 0.5}; }

void StftConfig::validate(double sample_rate) const {
  if (frame_ms.empty()) throw ValidationError("stft config: at least one frame length is required");
  if (!(hop_fraction > 0.0)) throw ValidationError("stft config: hop fraction must be positive");
  for (double ms : frame_ms) {
    ms_to_samples(ms, sample_rate);
    ms_to_samples(ms * hop_fraction, sample_rate);
  }
}

std::size_t ms_to_samples(double ms, double sample_rate) {
  const double n = ms * sample_rate / 1000.0;
  if (!(n > 0.0)) throw ValidationError("duration " + std::to_string(ms) + " ms must be positive");
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
    throw ValidationError("duration " + std::to_string(ms) + " ms is not a whole number of samples");
  }
  return static_cast<std::size_t>(r);
}

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t i = 0; i < length; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(length));
  return w;
}

std::size_t frame_count(std::size_t n_samples, std::size_t hop) {
  return std::max<std::size_t>(1, (n_samples + hop - 1) / hop);
}

Tensor stft_magnitude(std::span<const double> x, std::size_t frame, std::size_t hop) {
  if (frame == 0 || hop == 0) throw ValidationError("stft: frame length and hop must be positive");
  const std::size_t F = frame_count(x.size(), hop);
  const std::size_t B = frame / 2 + 1;
  const std::vector<double> win = hann_window(frame);
  Tensor out({F, B});
  std::vector<double> buf(frame);
  std::vector<Complex> spec(B);
  const bool fast = is_power_of_two(frame) && frame >= 2;
  auto plan = fast ? real_fft_plan(frame) : nullptr;
  for (std::size_t f = 0; f < F; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t i = 0; i < frame; ++i) {
      const std::size_t n = start + i;
      buf[i] = n < x.size() ? x[n] * win[i] : 0.0;
    }
    if (fast) {
      plan->forward(buf, spec);
    } else {
      const std::vector<Complex> full = direct_dft(buf);
      std::copy(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(B), spec.begin());
    }
    for (std::size_t k = 0; k < B; ++k) out.at(f, k) = std::abs(spec[k]);
  }
  return out;
}

Tensor stft_magnitude(const AudioBuffer& x, double frame_ms, double hop_ms) {
  if (!(frame_ms > 0.0) || !(hop_ms > 0.0)) throw ValidationError("stft: frame length and hop must be positive");
  return stft_magnitude(x.samples, ms_to_samples(frame_ms, x.sample_rate), ms_to_samples(hop_ms, x.sample_rate));
}

namespace {
double a_weighting_gain_sq(double f) {
  const double f2 = f * f;
  const double num = 12194.0 * 12194.0 * f2 * f2;
  const double den = (f2 + 20.6 * 20.6) * std::sqrt((f2 + 107.7 * 107.7) * (f2 + 737.9 * 737.9)) *
                     (f2 + 12194.0 * 12194.0);
  const double ra = num / den;
  return ra * ra * std::pow(10.0, 2.0 / 10.0);
}
}  // namespace

double a_weighting_db(double hz) { return 10.0 * std::log10(a_weighting_gain_sq(hz)); }

std::vector<double> a_weighted_loudness(const AudioBuffer& x, double hop_ms, double frame_ms) {
  const std::size_t frame = ms_to_samples(frame_ms, x.sample_rate);
  const std::size_t hop = ms_to_samples(hop_ms, x.sample_rate);
  const Tensor mag = stft_magnitude(x.samples, frame, hop);
  const std::vector<double> win = hann_window(frame);
  double win_energy = 0.0;
  for (double w : win) win_energy += w * w;
  const std::size_t B = frame / 2 + 1;
  std::vector<double> weight(B);
  for (std::size_t k = 0; k < B; ++k) {
    const double hz = static_cast<double>(k) * x.sample_rate / static_cast<double>(frame);
    // one-sided spectrum: interior bins stand for two
    const double fold = (k == 0 || (frame % 2 == 0 && k == B - 1)) ? 1.0 : 2.0;
    weight[k] = fold * a_weighting_gain_sq(hz) / (static_cast<double>(frame) * win_energy);
  }
  std::vector<double> out(mag.rows());
  const double floor_power = std::pow(10.0, kLoudnessFloorDb / 10.0);
  for (std::size_t t = 0; t < mag.rows(); ++t) {
    double p = 0.0;
    for (std::size_t k = 0; k < B; ++k) p += weight[k] * mag.at(t, k) * mag.at(t, k);
    out[t] = 10.0 * std::log10(std::max(p, floor_power));
  }
  return out;
}

Tensor mel_filterbank(std::size_t n_fft, std::size_t n_mels, double fmin, double fmax, double sample_rate) {
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw ValidationError("mel filterbank: need 0 <= fmin < fmax <= Nyquist");
  }
  if (n_mels == 0) throw ValidationError("mel filterbank: n_mels must be positive");
  auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto mel_to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
  const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  const std::size_t B = n_fft / 2 + 1;
  Tensor fb({B, n_mels});
  for (std::size_t k = 0; k < B; ++k) {
    const double hz = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
      double w = 0.0;
      if (hz > lo && hz <= c) w = (hz - lo) / (c - lo);
      else if (hz > c && hz < hi) w = (hi - hz) / (hi - c);
      fb.at(k, m) = w;
    }
  }
  return fb;
}

std::vector<double> dct_ortho(std::span<const double> values, std::size_t n_coeffs) {
  const std::size_t M = values.size();
  if (n_coeffs > M) throw ValidationError("dct: " + std::to_string(n_coeffs) + " coefficients exceed " + std::to_string(M) + " inputs");
  std::vector<double> out(n_coeffs);
  for (std::size_t k = 0; k < n_coeffs; ++k) {
    double acc = 0.0;
    for (std::size_t m = 0; m < M; ++m)
      acc += values[m] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(m) + 1.0) /
                                  (2.0 * static_cast<double>(M)));
    out[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(M));
  }
  return out;
}

Tensor mfcc(const AudioBuffer& x, const MfccConfig& cfg) {
  if (cfg.n_coeffs > cfg.n_mels) {
    throw ValidationError("mfcc: n_coeffs " + std::to_string(cfg.n_coeffs) + " exceeds n_mels " + std::to_string(cfg.n_mels));
  }
  const std::size_t frame = ms_to_samples(cfg.frame_ms, x.sample_rate);
  const std::size_t hop = ms_to_samples(cfg.hop_ms, x.sample_rate);
  const Tensor mag = stft_magnitude(x.samples, frame, hop);
  const Tensor fb = mel_filterbank(frame, cfg.n_mels, cfg.fmin, cfg.fmax, x.sample_rate);
  const std::size_t T = mag.rows(), B = mag.cols();
  Tensor out({T, cfg.n_coeffs});
  std::vector<double> logmel(cfg.n_mels);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < B; ++k) acc += mag.at(t, k) * fb.at(k, m);
      logmel[m] = std::log(std::max(acc, 1e-5));
    }
    const std::vector<double> c = dct_ortho(logmel, cfg.n_coeffs);
    std::copy(c.begin(), c.end(), out.data() + t * cfg.n_coeffs);
  }
  return out;
}

std::vector<double> upsample_framewise(std::span<const double> values, std::size_t hop, std::size_t total,
                                       std::size_t first_center) {
  if (values.empty() || hop == 0) throw ValidationError("upsample: needs at least one frame and a positive hop");
  const std::size_t T = values.size();
  const std::size_t last = first_center + (T - 1) * hop;
  std::vector<double> out(total);
  for (std::size_t n = 0; n < total; ++n) {
    if (n <= first_center) {
      out[n] = values[0];
    } else if (n >= last) {
      out[n] = values[T - 1];
    } else {
      const std::size_t rel = n - first_center;
      const std::size_t t = rel / hop;
      const double al = static_cast<double>(rel % hop) / static_cast<double>(hop);
      out[n] = values[t] + al * (values[t + 1] - values[t]);
    }
  }
  return out;
}

std::vector<double> estimate_f0(const AudioBuffer& x, double hop_ms, double fmin, double fmax, double fallback_hz) {
  const std::size_t hop = ms_to_samples(hop_ms, x.sample_rate);
  const std::size_t frame = 2 * hop;
  const std::size_t T = frame_count(x.size(), hop);
  const auto min_lag = static_cast<std::size_t>(std::floor(x.sample_rate / fmax));
  const auto max_lag = std::min(frame - 1, static_cast<std::size_t>(std::ceil(x.sample_rate / fmin)));
  std::vector<double> f0(T, 0.0);
  std::vector<bool> voiced(T, false);
  std::vector<double> buf(frame), r(max_lag + 2, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < frame; ++i) {
      const std::size_t n = t * hop + i;
      buf[i] = n < x.size() ? x.samples[n] : 0.0;
    }
    double energy = 0.0;
    for (double v : buf) energy += v * v;
    if (energy <= 1e-10) continue;
    for (std::size_t lag = 0; lag <= max_lag + 1 && lag < frame; ++lag) {
      double acc = 0.0;
      for (std::size_t i = 0; i + lag < frame; ++i) acc += buf[i] * buf[i + lag];
      // unbiased normalisation so long lags are not penalised
      r[lag] = acc / energy * static_cast<double>(frame) / static_cast<double>(frame - lag);
    }
    std::size_t best = 0;
    double best_v = 0.5;
    for (std::size_t lag = std::max<std::size_t>(min_lag, 2); lag <= max_lag; ++lag) {
      if (r[lag] > best_v && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) {
        best_v = r[lag];
        best = lag;
        if (r[lag] > 0.9) break;  // first strong peak avoids octave-down errors
      }
    }
    if (best == 0) continue;
    const double a = r[best - 1], b = r[best], c = r[best + 1];
    const double den = a - 2.0 * b + c;
    const double shift = den != 0.0 ? 0.5 * (a - c) / den : 0.0;
    f0[t] = x.sample_rate / (static_cast<double>(best) + std::clamp(shift, -0.5, 0.5));
    voiced[t] = true;
  }
  // fill unvoiced frames from the nearest voiced neighbour
  std::ptrdiff_t last_voiced = -1;
  for (std::size_t t = 0; t < T; ++t)
    if (voiced[t]) last_voiced = static_cast<std::ptrdiff_t>(t);
    else if (last_voiced >= 0) f0[t] = f0[static_cast<std::size_t>(last_voiced)];
  std::ptrdiff_t next_voiced = -1;
  for (std::size_t t = T; t-- > 0;)
    if (voiced[t]) next_voiced = static_cast<std::ptrdiff_t>(t);
    else if (f0[t] == 0.0) f0[t] = next_voiced >= 0 ? f0[static_cast<std::size_t>(next_voiced)] : fallback_hz;
  return f0;
}

}  // namespace mixsynth::dsp
