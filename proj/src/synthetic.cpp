#include "mixsynth/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mixsynth/error.hpp"
#include "mixsynth/mixture.hpp"

namespace mixsynth::synthetic {

void ScenarioConfig::validate(const nets::ModelConfig& model) const {
  if (n_sources < 1) throw ValidationError("scenario: n_sources must be >= 1");
  if (!(duration_s > 0.0)) throw ValidationError("scenario: duration must be positive");
  const double n = duration_s * model.sample_rate;
  if (std::abs(n - std::round(n)) > 1e-6 || static_cast<std::size_t>(std::llround(n)) % model.hop() != 0)
    throw ValidationError("scenario: duration must be a whole number of " + std::to_string(model.hop()) + "-sample frames");
  if (note_ranges.empty()) throw ValidationError("scenario: no note ranges");
  for (const auto& [lo, hi] : note_ranges) {
    if (lo > hi || lo < 0 || hi > 127) throw ValidationError("scenario: note range must satisfy 0 <= low <= high <= 127");
    if (score::midi_to_hz(hi) >= model.sample_rate / 2.0)
      throw ValidationError("scenario: note " + std::to_string(hi) + " lies above Nyquist");
  }
  if (!(min_note_s > 0.0) || max_note_s < min_note_s) throw ValidationError("scenario: need 0 < min_note_s <= max_note_s");
  if (rest_probability < 0.0 || rest_probability >= 1.0) throw ValidationError("scenario: rest_probability must be in [0, 1)");
  if (!(active_loudness_low <= active_loudness_high) || !(silent_loudness < active_loudness_low))
    throw ValidationError("scenario: need silent_loudness < active_loudness_low <= active_loudness_high");
}

Scenario generate(const ScenarioConfig& cfg, const nets::SynthModel& model) {
  cfg.validate(model.config);
  const std::size_t hop = model.config.hop();
  const std::size_t N = static_cast<std::size_t>(std::llround(cfg.duration_s * model.config.sample_rate));
  const std::size_t T = N / hop;
  const double frame_s = static_cast<double>(hop) / model.config.sample_rate;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Scenario sc;
  sc.truth.hop_ms = model.config.hop_ms;
  sc.truth.sample_rate = model.config.sample_rate;
  for (std::size_t r = 0; r < cfg.n_sources; ++r) {
    const auto [lo, hi] = cfg.note_ranges[std::min(r, cfg.note_ranges.size() - 1)];
    std::uniform_int_distribution<int> pick(lo, hi);
    score::ScoreTrack track;
    track.source = r;
    std::vector<double> level;  // peak loudness per event
    double t = 0.0;
    while (t < cfg.duration_s) {
      const double len = cfg.min_note_s + (cfg.max_note_s - cfg.min_note_s) * unit(rng);
      const double end = std::min(cfg.duration_s, t + len);
      if (unit(rng) >= cfg.rest_probability || track.events.empty()) {
        track.events.push_back({t, end, pick(rng)});
        level.push_back(cfg.active_loudness_low + (cfg.active_loudness_high - cfg.active_loudness_low) * unit(rng));
      }
      t = end;
    }
    const score::PianoRoll roll = score::rasterize(track, T, model.config.hop_ms, model.config.sample_rate);
    nets::SynthParams p;
    p.f0 = score::init_f0(roll);
    p.loudness.assign(T, cfg.silent_loudness);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    for (std::size_t f = 0; f < T; ++f) {
      if (roll[f] < 0) continue;
      const double time = static_cast<double>(f + 1) * frame_s;
      const double cents = cfg.vibrato_cents * std::sin(2.0 * std::numbers::pi * cfg.vibrato_hz * time + phase);
      p.f0[f] *= std::exp2(cents / 1200.0);
    }
    // same centre rule as rasterize; loudness decays gently over each note
    for (std::size_t e = 0; e < track.events.size(); ++e) {
      const score::NoteEvent& ev = track.events[e];
      for (std::size_t f = 0; f < T; ++f) {
        const double centre = static_cast<double>(std::min((f + 1) * hop, N - 1)) / model.config.sample_rate;
        if (centre < ev.onset || centre >= ev.offset) continue;
        p.loudness[f] = level[e] - 0.3 * (centre - ev.onset) / (ev.offset - ev.onset);
      }
    }
    const std::size_t D = model.config.latent_dim;
    p.z = Tensor({T, D});
    std::vector<double> zt(D);
    for (double& v : zt) v = 0.3 * normal(rng);
    for (std::size_t f = 0; f < T; ++f) {
      for (std::size_t d = 0; d < D; ++d) {
        zt[d] = 0.95 * zt[d] + cfg.z_step * normal(rng);
        p.z.at(f, d) = zt[d];
      }
    }
    sc.truth.sources.push_back(std::move(p));
    sc.score.tracks.push_back(std::move(track));
  }

  mixture::MixtureState state;
  state.sources = sc.truth.sources;
  state.models.assign(cfg.n_sources, &model);
  state.seed = cfg.seed;
  state.n_samples = N;
  mixture::MixtureOutput out = mixture::synthesize_mixture(state);
  sc.mixture = std::move(out.mixture);
  sc.stems = std::move(out.stems);
  return sc;
}

std::vector<optim::TrainingClip> training_clips(std::size_t count, double duration_s, std::uint64_t seed,
                                                const nets::ModelConfig& model) {
  const std::size_t hop = model.hop();
  const double sr = model.sample_rate;
  const std::size_t T = static_cast<std::size_t>(std::llround(duration_s * sr)) / hop;
  if (count == 0 || T < 2) throw ValidationError("training clips: need at least one clip of two frames");
  const std::size_t N = T * hop;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<optim::TrainingClip> clips;
  for (std::size_t c = 0; c < count; ++c) {
    const double note = 45.0 + 30.0 * unit(rng);
    const double tilt = 0.5 + 1.5 * unit(rng);
    // log-uniform start and end gains so loudness spans roughly -6..-1 bels
    const double gain0 = 0.005 * std::pow(60.0, unit(rng));
    const double gain1 = 0.005 * std::pow(60.0, unit(rng));
    const double rate = 4.0 + 2.0 * unit(rng);
    // the note stops early and the rest of the clip is silent
    const double note_end = (0.65 + 0.2 * unit(rng)) * static_cast<double>(N) / sr;
    optim::TrainingClip clip;
    clip.f0.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      const double time = static_cast<double>(t + 1) * static_cast<double>(hop) / sr;
      clip.f0[t] = score::midi_to_hz(note + 0.15 * std::sin(2.0 * std::numbers::pi * rate * time));
    }
    const std::vector<double> f = dsp::upsample_framewise(clip.f0, hop, N, hop);
    clip.audio.samples.assign(N, 0.0);
    double phase = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double time = static_cast<double>(n) / sr;
      const double env = std::clamp(std::min(time / 0.05, (note_end - time) / 0.1), 0.0, 1.0);
      const double gain = gain0 * std::pow(gain1 / gain0, std::min(1.0, time / note_end));
      double s = 0.0;
      for (int k = 1; k * f[n] < sr / 2.0 && k <= 30; ++k) s += std::sin(2.0 * std::numbers::pi * k * phase) / std::pow(k, tilt);
      clip.audio.samples[n] = gain * env * s + 1e-3 * gain * env * normal(rng) + 1e-6 * normal(rng);
      phase += f[n] / sr;
      phase -= std::floor(phase);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace mixsynth::synthetic
