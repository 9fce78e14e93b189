#include "mixsynth/synth.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "mixsynth/error.hpp"

namespace mixsynth::synth {

void ControlSignals::validate() const {
  const std::size_t T = amplitude.size();
  if (harmonic_distribution.rank() != 2 || harmonic_distribution.rows() != T || noise_magnitudes.rank() != 2 ||
      noise_magnitudes.rows() != T) {
    throw ValidationError("control signals: amplitude, harmonic distribution and noise magnitudes must share " +
                          std::to_string(T) + " frames");
  }
  for (double a : amplitude)
    if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("control signals: amplitude must be finite and >= 0");
  for (double m : noise_magnitudes.values())
    if (!(m >= 0.0) || !std::isfinite(m)) throw ValidationError("control signals: noise magnitudes must be finite and >= 0");
}

ReverbIR ReverbIR::dry(std::size_t length) {
  ReverbIR ir;
  ir.taps.assign(std::max<std::size_t>(1, length), 0.0);
  ir.taps[0] = 1.0;
  ir.enabled = false;
  return ir;
}

const Tensor& noise_fir_matrix(std::size_t n_bands) {
  static std::mutex mu;
  static std::map<std::size_t, Tensor> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n_bands);
  if (it != cache.end()) return it->second;
  if (n_bands < 2) throw ValidationError("noise synth: at least 2 noise bands are required");
  const std::size_t P = 2 * (n_bands - 1);
  const std::vector<double> win = dsp::hann_window(P);
  Tensor m({n_bands, P});
  for (std::size_t k = 0; k < n_bands; ++k) {
    const double fold = (k == 0 || k == n_bands - 1) ? 1.0 : 2.0;
    for (std::size_t j = 0; j < P; ++j) {
      // tap j holds the zero-phase response at lag j - P/2
      const double lag = static_cast<double>(j) - static_cast<double>(P / 2);
      m.at(k, j) = win[j] * fold * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) * lag / static_cast<double>(P)) /
                   static_cast<double>(P);
    }
  }
  return cache.emplace(n_bands, std::move(m)).first->second;
}

std::shared_ptr<const ad::NoiseExcitation> make_excitation(std::size_t frames, std::uint64_t seed, const SynthConfig& cfg) {
  return std::make_shared<const ad::NoiseExcitation>(
      ad::NoiseExcitation::generate(frames, cfg.hop, cfg.first_center(), seed));
}

ad::DiffValue harmonic_part(ad::DiffValue f0, const DiffControls& controls, std::size_t n_samples,
                            const SynthConfig& cfg) {
  const ad::DiffValue amps = ad::scale_rows(controls.distribution, controls.amplitude);
  return ad::harmonic_bank(f0, amps, cfg.bank(n_samples));
}

ad::DiffValue noise_part(const DiffControls& controls, std::shared_ptr<const ad::NoiseExcitation> excitation,
                         std::size_t n_samples, const SynthConfig& cfg) {
  const Tensor& fir = noise_fir_matrix(cfg.n_noise_bands);
  const ad::DiffValue taps = ad::matmul_const(controls.noise, fir);
  return ad::filtered_noise(taps, std::move(excitation), n_samples);
}

ad::DiffValue synthesize(ad::DiffValue f0, const DiffControls& controls, ad::DiffValue ir,
                         std::shared_ptr<const ad::NoiseExcitation> excitation, std::size_t n_samples,
                         const SynthConfig& cfg) {
  const std::size_t T = f0.size();
  if (controls.amplitude.size() != T || controls.distribution.data().rows() != T || controls.noise.data().rows() != T) {
    throw ShapeError("synthesize: f0 has " + std::to_string(T) + " frames but controls are " +
                     shape_string(controls.amplitude.shape()) + ", " + shape_string(controls.distribution.shape()) +
                     ", " + shape_string(controls.noise.shape()));
  }
  if (controls.noise.data().cols() != cfg.n_noise_bands) {
    throw ShapeError("synthesize: noise magnitudes " + shape_string(controls.noise.shape()) + " vs " +
                     std::to_string(cfg.n_noise_bands) + " bands");
  }
  ad::DiffValue out = ad::add(harmonic_part(f0, controls, n_samples, cfg), noise_part(controls, std::move(excitation), n_samples, cfg));
  if (ir.valid()) out = ad::reverb(out, ir);
  return out;
}

namespace {

DiffControls constant_controls(ad::DiffGraph& g, const ControlSignals& c) {
  c.validate();
  const std::size_t T = c.frames();
  return {g.constant(Tensor({T, 1}, c.amplitude)), g.constant(c.harmonic_distribution), g.constant(c.noise_magnitudes)};
}

dsp::AudioBuffer to_buffer(const ad::DiffValue& v, double sr) {
  return dsp::AudioBuffer{v.data().storage(), sr};
}

}  // namespace

dsp::AudioBuffer harmonic_synth(std::span<const double> f0, const ControlSignals& controls, std::size_t n_samples,
                                const SynthConfig& cfg) {
  ad::DiffGraph g;
  const DiffControls dc = constant_controls(g, controls);
  if (f0.size() != controls.frames()) throw ShapeError("harmonic_synth: f0 and controls frame counts differ");
  const ad::DiffValue f = g.constant(Tensor::vector({f0.begin(), f0.end()}));
  return to_buffer(harmonic_part(f, dc, n_samples, cfg), cfg.sample_rate);
}

dsp::AudioBuffer noise_synth(const Tensor& noise_magnitudes, std::size_t n_samples, std::uint64_t seed,
                             const SynthConfig& cfg) {
  ad::DiffGraph g;
  if (noise_magnitudes.rank() != 2 || noise_magnitudes.cols() != cfg.n_noise_bands) {
    throw ShapeError("noise_synth: magnitudes " + shape_string(noise_magnitudes.shape()) + " vs " +
                     std::to_string(cfg.n_noise_bands) + " bands");
  }
  DiffControls dc;
  dc.noise = g.constant(noise_magnitudes);
  return to_buffer(noise_part(dc, make_excitation(noise_magnitudes.rows(), seed, cfg), n_samples, cfg), cfg.sample_rate);
}

dsp::AudioBuffer apply_reverb(const dsp::AudioBuffer& x, const ReverbIR& ir) {
  if (!ir.enabled) return x;
  ad::DiffGraph g;
  const ad::DiffValue out = ad::reverb(g.constant(Tensor::vector(x.samples)), g.constant(Tensor::vector(ir.taps)));
  return to_buffer(out, x.sample_rate);
}

dsp::AudioBuffer synthesize(std::span<const double> f0, const ControlSignals& controls, const ReverbIR& ir,
                            std::size_t n_samples, std::uint64_t seed, const SynthConfig& cfg) {
  ad::DiffGraph g;
  const DiffControls dc = constant_controls(g, controls);
  const ad::DiffValue f = g.constant(Tensor::vector({f0.begin(), f0.end()}));
  const ad::DiffValue irv = ir.enabled ? g.constant(Tensor::vector(ir.taps)) : ad::DiffValue{};
  return to_buffer(synthesize(f, dc, irv, make_excitation(controls.frames(), seed, cfg), n_samples, cfg), cfg.sample_rate);
}

}  // namespace mixsynth::synth
