#include "mixsynth/mixture.hpp"

#include <map>

#include "mixsynth/error.hpp"
#include "mixsynth/ops.hpp"

namespace mixsynth::mixture {

void MixtureState::validate() const {
  if (sources.empty()) throw ValidationError("mixture: at least one source is required");
  if (models.size() != sources.size())
    throw ValidationError("mixture: " + std::to_string(sources.size()) + " sources but " + std::to_string(models.size()) + " models");
  if (!noise_seeds.empty() && noise_seeds.size() != sources.size())
    throw ValidationError("mixture: noise_seeds must list one seed per source");
  const std::size_t T = frames();
  for (std::size_t r = 0; r < sources.size(); ++r) {
    if (models[r] == nullptr) throw ValidationError("mixture: source " + std::to_string(r) + " has no model");
    sources[r].validate(models[r]->config.latent_dim);
    if (sources[r].frames() != T)
      throw ValidationError("mixture: source " + std::to_string(r) + " has " + std::to_string(sources[r].frames()) +
                            " frames, source 0 has " + std::to_string(T));
    if (models[r]->config.hop() != models[0]->config.hop())
      throw ValidationError("mixture: all models must share one hop size");
  }
  if (n_samples == 0) throw ValidationError("mixture: n_samples must be positive");
}

Excitations make_excitations(const MixtureState& state) {
  Excitations out;
  for (std::size_t r = 0; r < state.size(); ++r)
    out.push_back(synth::make_excitation(state.frames(), state.noise_seed(r), state.models[r]->config.synth()));
  return out;
}

MixtureGraph render_mixture(ad::DiffGraph& g, const MixtureState& state, std::span<const SourceInputs> inputs,
                            const Excitations& excitations) {
  if (inputs.size() != state.size() || excitations.size() != state.size())
    throw ValidationError("render_mixture: inputs, excitations and sources must agree in count");
  std::map<const nets::SynthModel*, nets::BoundModel> bound;
  MixtureGraph out;
  for (std::size_t r = 0; r < state.size(); ++r) {
    const nets::SynthModel* m = state.models[r];
    auto it = bound.find(m);
    if (it == bound.end()) it = bound.emplace(m, nets::bind(g, *m, false)).first;
    out.stems.push_back(
        nets::render(it->second, inputs[r].f0, inputs[r].z, inputs[r].loudness, excitations[r], state.n_samples));
  }
  out.mixture = out.stems[0];
  for (std::size_t r = 1; r < out.stems.size(); ++r) out.mixture = ad::add(out.mixture, out.stems[r]);
  return out;
}

dsp::AudioBuffer mix_stems(const std::vector<dsp::AudioBuffer>& stems) {
  if (stems.empty()) throw ValidationError("mix_stems: no stems");
  dsp::AudioBuffer mix = stems[0];
  for (std::size_t r = 1; r < stems.size(); ++r) {
    if (stems[r].size() != mix.size()) throw ValidationError("mix_stems: stem lengths differ");
    for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] += stems[r].samples[i];
  }
  return mix;
}

MixtureOutput synthesize_mixture(const MixtureState& state) {
  state.validate();
  const Excitations exc = make_excitations(state);
  MixtureOutput out;
  const double sr = state.models[0]->config.sample_rate;
  for (std::size_t r = 0; r < state.size(); ++r) {
    ad::DiffGraph g;
    const nets::SynthParams& p = state.sources[r];
    const SourceInputs in{g.constant(Tensor::vector(p.f0)), g.constant(p.z), g.constant(Tensor::vector(p.loudness))};
    const nets::BoundModel b = nets::bind(g, *state.models[r], false);
    out.stems.push_back({nets::render(b, in.f0, in.z, in.loudness, exc[r], state.n_samples).data().storage(), sr});
  }
  out.mixture = mix_stems(out.stems);
  return out;
}

namespace {

constexpr double kLogFloor = 1e-6;

Tensor magnitude_of(std::span<const double> x, std::size_t frame, std::size_t hop, std::span<const double> window) {
  ad::DiffGraph g;
  const ad::DiffValue s = g.constant(Tensor::vector({x.begin(), x.end()}));
  return ad::dft_magnitude(ad::frame(s, frame, hop), window).data();
}

Tensor floored_log(const Tensor& m) {
  ad::DiffGraph g;
  return ad::log(g.constant(m), kLogFloor).data();
}

}  // namespace

SpectralLoss::SpectralLoss(const dsp::AudioBuffer& target, const dsp::StftConfig& cfg) : n_samples_(target.size()) {
  cfg.validate(target.sample_rate);
  if (target.size() == 0) throw ValidationError("spectral loss: empty target");
  for (double ms : cfg.frame_ms) {
    Scale s;
    s.frame = dsp::ms_to_samples(ms, target.sample_rate);
    s.hop = dsp::ms_to_samples(ms * cfg.hop_fraction, target.sample_rate);
    s.window = dsp::hann_window(s.frame);
    s.magnitude = magnitude_of(target.samples, s.frame, s.hop, s.window);
    s.log_magnitude = floored_log(s.magnitude);
    scales_.push_back(std::move(s));
  }
}

ad::DiffValue SpectralLoss::operator()(ad::DiffValue estimate) const {
  if (estimate.size() != n_samples_)
    throw ValidationError("spectral loss: estimate has " + std::to_string(estimate.size()) + " samples, observed has " +
                          std::to_string(n_samples_));
  ad::DiffGraph& g = *estimate.graph();
  ad::DiffValue total;
  for (const Scale& s : scales_) {
    const ad::DiffValue mag = ad::dft_magnitude(ad::frame(estimate, s.frame, s.hop), s.window);
    const ad::DiffValue term = ad::add(ad::l1_distance(g.constant(s.magnitude), mag),
                                       ad::l1_distance(g.constant(s.log_magnitude), ad::log(mag, kLogFloor)));
    total = total.valid() ? ad::add(total, term) : term;
  }
  return total;
}

double spectral_loss(const dsp::AudioBuffer& a, const dsp::AudioBuffer& b, const dsp::StftConfig& cfg) {
  if (a.size() != b.size())
    throw ValidationError("spectral loss: lengths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  const SpectralLoss loss(a, cfg);
  ad::DiffGraph g;
  return loss(g.constant(Tensor::vector(b.samples))).item();
}

ad::DiffValue mixture_loss(ad::DiffGraph& g, const MixtureState& state, const dsp::AudioBuffer& observed,
                           const dsp::StftConfig& cfg) {
  state.validate();
  if (observed.size() != state.n_samples)
    throw ValidationError("mixture loss: observed has " + std::to_string(observed.size()) + " samples, state expects " +
                          std::to_string(state.n_samples));
  std::vector<SourceInputs> inputs;
  for (const nets::SynthParams& p : state.sources)
    inputs.push_back({g.variable(Tensor::vector(p.f0)), g.variable(p.z), g.variable(Tensor::vector(p.loudness))});
  const MixtureGraph mg = render_mixture(g, state, inputs, make_excitations(state));
  return SpectralLoss(observed, cfg)(mg.mixture);
}

}  // namespace mixsynth::mixture
