#pragma once

// Synthetic scenarios rendered through the model's own synthesizer, so the
// generating parameters are a known optimum of the fitting problem.

#include <cstdint>
#include <utility>
#include <vector>

#include "mixsynth/io.hpp"
#include "mixsynth/nets.hpp"
#include "mixsynth/optim.hpp"
#include "mixsynth/score.hpp"

namespace mixsynth::synthetic {

struct ScenarioConfig {
  std::size_t n_sources = 2;
  double duration_s = 12.0;
  /// Inclusive MIDI range per source; missing entries reuse the last one.
  std::vector<std::pair<int, int>> note_ranges = {{67, 79}, {48, 60}};
  double min_note_s = 0.5;
  double max_note_s = 1.5;
  double rest_probability = 0.2;
  double vibrato_cents = 10.0;
  double vibrato_hz = 5.0;
  double active_loudness_low = -5.0;   // model units
  double active_loudness_high = -3.0;
  double silent_loudness = score::kDefaultLowLoudness;
  double z_step = 0.1;
  std::uint64_t seed = 0;

  /// Rejects empty or inverted ranges and notes whose fundamental is at or above Nyquist.
  void validate(const nets::ModelConfig& model) const;
};

struct Scenario {
  io::ParamFile truth;
  score::Score score;
  dsp::AudioBuffer mixture;
  std::vector<dsp::AudioBuffer> stems;
};

/// Notes, vibrato, loudness envelopes and a smooth z walk per source. Rests
/// hold f0 at the source's mean note and loudness at `silent_loudness`.
/// The mixture uses noise seed cfg.seed.
Scenario generate(const ScenarioConfig& cfg, const nets::SynthModel& model);

/// Monophonic harmonic clips with a known f0 track, built analytically
/// (decaying partials, vibrato, a gain ramp, an attack/release envelope, a
/// silent tail and a little noise).
std::vector<optim::TrainingClip> training_clips(std::size_t count, double duration_s, std::uint64_t seed,
                                                const nets::ModelConfig& model);

}  // namespace mixsynth::synthetic
