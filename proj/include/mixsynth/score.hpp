#pragma once

// Aligned note events, piano rolls and score-informed initial values.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mixsynth::score {

inline constexpr std::string_view kScoreVersion = "mixsynth-score/1";
inline constexpr int kSilence = -1;
inline constexpr double kDefaultHighLoudness = -6.0;
inline constexpr double kDefaultLowLoudness = -10.0;

struct NoteEvent {
  double onset = 0.0;   // s
  double offset = 0.0;  // s
  int note = 0;         // MIDI 0..127
};

/// Monophonic note sequence of one source.
struct ScoreTrack {
  std::size_t source = 0;
  std::vector<NoteEvent> events;

  /// Rejects onset >= offset, notes outside 0..127 and overlapping events.
  void validate() const;
};

/// Per-frame MIDI note, kSilence where nothing plays.
using PianoRoll = std::vector<int>;

/// Frame t takes the note sounding at its centre (t + 1) * hop, clamped to
/// the last sample of the T * hop signal. Events are half-open [onset, offset).
PianoRoll rasterize(const ScoreTrack& track, std::size_t frames, double hop_ms, double sample_rate = 16000.0);

double midi_to_hz(double note);

/// Active frames map through 440 * 2^((p - 69) / 12); silent frames use the
/// mean active note number. Throws ValidationError for an all-silent roll.
std::vector<double> init_f0(const PianoRoll& roll);
std::vector<double> init_loudness(const PianoRoll& roll, double high = kDefaultHighLoudness,
                                  double low = kDefaultLowLoudness);

/// Tracks indexed by source; sources without events get empty tracks.
struct Score {
  std::vector<ScoreTrack> tracks;
};

std::string score_to_json(const Score& score);
Score score_from_json(std::string_view text, std::size_t min_sources = 0);
void save_score(const Score& score, const std::filesystem::path& path);
Score load_score(const std::filesystem::path& path, std::size_t min_sources = 0);

}  // namespace mixsynth::score
