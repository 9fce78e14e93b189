#pragma once

// Evaluation: F0 error in cents, MFCC distance and loudness error in dB.

#include <optional>
#include <string>
#include <vector>

#include "mixsynth/dsp.hpp"
#include "mixsynth/io.hpp"
#include "mixsynth/score.hpp"

namespace mixsynth::metrics {

using Mask = std::vector<bool>;

/// Mean over masked frames of |1200 log2(max(est, 1e-7) / ref)|.
/// Throws ValidationError when the mask selects no frame.
double f0_mae_cents(std::span<const double> est, std::span<const double> ref, const Mask& mask);
/// Mean |difference| of the 128 ms / 128-mel / 30-coefficient MFCC matrices.
double mfcc_mae(const dsp::AudioBuffer& est, const dsp::AudioBuffer& ref);
/// Mean |difference| of A-weighted loudness in dB, over all frames or the masked ones.
double loudness_mae(const dsp::AudioBuffer& est, const dsp::AudioBuffer& ref, const Mask* mask = nullptr);

/// Active frames of a reference: score-active frames, or loudness above l_low + 1.
Mask mask_from_roll(const score::PianoRoll& roll);
Mask mask_from_loudness(std::span<const double> loudness, double l_low = score::kDefaultLowLoudness);

struct SourceRow {
  std::size_t source = 0;     // estimated source index
  std::size_t reference = 0;  // reference source it is scored against
  double f0_cents = 0.0;
  double mfcc = 0.0;
  double loudness_db = 0.0;
  std::size_t voiced_frames = 0;
};

struct EvalBlock {
  std::vector<SourceRow> rows;
  SourceRow mean;  // source/reference unused
};

struct EvalReport {
  EvalBlock estimate;
  std::optional<EvalBlock> reference_self;  // reference scored against itself
  bool assigned_by_index = true;
};

/// Scores est stems/params against the reference. masks[r] belongs to reference r.
/// Without index assignment the permutation minimising summed F0 error is used (R <= 4).
EvalBlock evaluate(const io::ParamFile& est, const std::vector<dsp::AudioBuffer>& est_stems, const io::ParamFile& ref,
                   const std::vector<dsp::AudioBuffer>& ref_stems, const std::vector<Mask>& masks, bool by_index);

std::string report_to_json(const EvalReport& report);
/// Column-aligned text table.
std::string report_to_table(const EvalReport& report);

}  // namespace mixsynth::metrics
