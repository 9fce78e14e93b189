#include "mixsynth/score.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mixsynth/blob.hpp"
#include "mixsynth/error.hpp"

namespace mixsynth::score {

using nlohmann::json;

void ScoreTrack::validate() const {
  const std::string who = "score track " + std::to_string(source);
  std::vector<NoteEvent> sorted = events;
  for (const NoteEvent& e : sorted) {
    if (!std::isfinite(e.onset) || !std::isfinite(e.offset) || !(e.onset < e.offset))
      throw ValidationError(who + ": event needs onset < offset (got " + std::to_string(e.onset) + ", " +
                            std::to_string(e.offset) + ")");
    if (e.note < 0 || e.note > 127) throw ValidationError(who + ": MIDI note " + std::to_string(e.note) + " outside 0..127");
  }
  std::sort(sorted.begin(), sorted.end(), [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].onset < sorted[i - 1].offset)
      throw ValidationError(who + ": overlapping events at " + std::to_string(sorted[i].onset) +
                            " s (tracks must be monophonic)");
}

PianoRoll rasterize(const ScoreTrack& track, std::size_t frames, double hop_ms, double sample_rate) {
  track.validate();
  const double hop = hop_ms * sample_rate / 1000.0;
  const double last = static_cast<double>(frames) * hop - 1.0;
  PianoRoll roll(frames, kSilence);
  for (std::size_t t = 0; t < frames; ++t) {
    const double centre = std::min(static_cast<double>(t + 1) * hop, last) / sample_rate;
    for (const NoteEvent& e : track.events)
      if (e.onset <= centre && centre < e.offset) roll[t] = e.note;
  }
  return roll;
}

double midi_to_hz(double note) { return 440.0 * std::exp2((note - 69.0) / 12.0); }

std::vector<double> init_f0(const PianoRoll& roll) {
  double total = 0.0;
  std::size_t active = 0;
  for (int p : roll)
    if (p >= 0) {
      total += p;
      ++active;
    }
  if (active == 0) throw ValidationError("init_f0: the piano roll has no active frames; supply a fallback pitch");
  const double silent_hz = midi_to_hz(total / static_cast<double>(active));
  std::vector<double> f0(roll.size());
  for (std::size_t t = 0; t < roll.size(); ++t) f0[t] = roll[t] >= 0 ? midi_to_hz(roll[t]) : silent_hz;
  return f0;
}

std::vector<double> init_loudness(const PianoRoll& roll, double high, double low) {
  if (!(high > low)) throw ValidationError("init_loudness: l_high must exceed l_low");
  std::vector<double> l(roll.size());
  for (std::size_t t = 0; t < roll.size(); ++t) l[t] = roll[t] >= 0 ? high : low;
  return l;
}

std::string score_to_json(const Score& score) {
  json events = json::array();
  for (const ScoreTrack& tr : score.tracks) {
    tr.validate();
    for (const NoteEvent& e : tr.events)
      events.push_back({{"source", tr.source}, {"onset_s", e.onset}, {"offset_s", e.offset}, {"midi_note", e.note}});
  }
  json j = {{"version", kScoreVersion}, {"events", events}};
  return j.dump(2) + "\n";
}

Score score_from_json(std::string_view text, std::size_t min_sources) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("score: parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("version") || j["version"] != kScoreVersion)
    throw SchemaError("score version: expected " + std::string(kScoreVersion));
  if (!j.contains("events") || !j["events"].is_array()) throw SchemaError("score events: expected an array");
  Score s;
  s.tracks.resize(min_sources);
  for (std::size_t i = 0; i < j["events"].size(); ++i) {
    const json& e = j["events"][i];
    const std::string where = "events[" + std::to_string(i) + "].";
    for (const char* key : {"source", "onset_s", "offset_s", "midi_note"})
      if (!e.is_object() || !e.contains(key) || !e[key].is_number()) throw SchemaError(where + key + ": missing or not a number");
    if (!e["source"].is_number_unsigned()) throw SchemaError(where + "source: expected a nonnegative integer");
    if (!e["midi_note"].is_number_integer()) throw SchemaError(where + "midi_note: expected an integer");
    const std::size_t src = e["source"].get<std::size_t>();
    if (src >= 64) throw SchemaError(where + "source: at most 64 sources are supported");
    if (s.tracks.size() <= src) s.tracks.resize(src + 1);
    s.tracks[src].events.push_back({e["onset_s"].get<double>(), e["offset_s"].get<double>(), e["midi_note"].get<int>()});
  }
  for (std::size_t r = 0; r < s.tracks.size(); ++r) {
    s.tracks[r].source = r;
    s.tracks[r].validate();
  }
  return s;
}

void save_score(const Score& score, const std::filesystem::path& path) { io::write_text(path, score_to_json(score)); }

Score load_score(const std::filesystem::path& path, std::size_t min_sources) {
  return score_from_json(io::read_text(path), min_sources);
}

}  // namespace mixsynth::score
