#include "mixsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "mixsynth/error.hpp"

namespace mixsynth::metrics {

double f0_mae_cents(std::span<const double> est, std::span<const double> ref, const Mask& mask) {
  if (est.size() != ref.size() || mask.size() != ref.size())
    throw ValidationError("f0_mae_cents: lengths differ (est " + std::to_string(est.size()) + ", ref " +
                          std::to_string(ref.size()) + ", mask " + std::to_string(mask.size()) + ")");
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (!mask[t]) continue;
    total += std::abs(1200.0 * std::log2(std::max(est[t], 1e-7) / std::max(ref[t], 1e-7)));
    ++n;
  }
  if (n == 0) throw ValidationError("f0_mae_cents: undefined result, the voiced mask is empty");
  return total / static_cast<double>(n);
}

double mfcc_mae(const dsp::AudioBuffer& est, const dsp::AudioBuffer& ref) {
  if (est.size() != ref.size()) throw ValidationError("mfcc_mae: lengths differ");
  const Tensor a = dsp::mfcc(est, dsp::MfccConfig::evaluation());
  const Tensor b = dsp::mfcc(ref, dsp::MfccConfig::evaluation());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

double loudness_mae(const dsp::AudioBuffer& est, const dsp::AudioBuffer& ref, const Mask* mask) {
  const std::vector<double> a = dsp::a_weighted_loudness(est);
  const std::vector<double> b = dsp::a_weighted_loudness(ref);
  if (a.size() != b.size()) throw ValidationError("loudness_mae: frame counts differ");
  if (mask && mask->size() != b.size())
    throw ValidationError("loudness_mae: mask has " + std::to_string(mask->size()) + " frames, audio has " + std::to_string(b.size()));
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < b.size(); ++t) {
    if (mask && !(*mask)[t]) continue;
    total += std::abs(a[t] - b[t]);
    ++n;
  }
  if (n == 0) throw ValidationError("loudness_mae: undefined result, no frames selected");
  return total / static_cast<double>(n);
}

Mask mask_from_roll(const score::PianoRoll& roll) {
  Mask m(roll.size());
  for (std::size_t t = 0; t < roll.size(); ++t) m[t] = roll[t] >= 0;
  return m;
}

Mask mask_from_loudness(std::span<const double> loudness, double l_low) {
  Mask m(loudness.size());
  for (std::size_t t = 0; t < loudness.size(); ++t) m[t] = loudness[t] > l_low + 1.0;
  return m;
}

EvalBlock evaluate(const io::ParamFile& est, const std::vector<dsp::AudioBuffer>& est_stems, const io::ParamFile& ref,
                   const std::vector<dsp::AudioBuffer>& ref_stems, const std::vector<Mask>& masks, bool by_index) {
  const std::size_t R = ref.sources.size();
  if (est.sources.size() != R || est_stems.size() != R || ref_stems.size() != R || masks.size() != R)
    throw ValidationError("evaluate: estimate, reference, stems and masks must all cover " + std::to_string(R) + " sources");
  if (est.frames() != ref.frames())
    throw ValidationError("evaluate: estimate has " + std::to_string(est.frames()) + " frames, reference " +
                          std::to_string(ref.frames()));
  std::vector<std::size_t> assign(R);
  std::iota(assign.begin(), assign.end(), 0);
  if (!by_index && R > 1) {
    if (R > 4) throw ValidationError("evaluate: permutation search supports at most 4 sources; pass a score");
    std::vector<std::size_t> perm = assign;
    double best = std::numeric_limits<double>::infinity();
    do {
      double total = 0.0;
      for (std::size_t r = 0; r < R; ++r) total += f0_mae_cents(est.sources[perm[r]].f0, ref.sources[r].f0, masks[r]);
      if (total < best) {
        best = total;
        assign = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  EvalBlock block;
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t e = assign[r];
    SourceRow row;
    row.source = e;
    row.reference = r;
    row.f0_cents = f0_mae_cents(est.sources[e].f0, ref.sources[r].f0, masks[r]);
    row.mfcc = mfcc_mae(est_stems[e], ref_stems[r]);
    row.loudness_db = loudness_mae(est_stems[e], ref_stems[r], &masks[r]);
    row.voiced_frames = static_cast<std::size_t>(std::count(masks[r].begin(), masks[r].end(), true));
    block.rows.push_back(row);
    block.mean.f0_cents += row.f0_cents / static_cast<double>(R);
    block.mean.mfcc += row.mfcc / static_cast<double>(R);
    block.mean.loudness_db += row.loudness_db / static_cast<double>(R);
    block.mean.voiced_frames += row.voiced_frames;
  }
  return block;
}

namespace {

nlohmann::json block_json(const EvalBlock& b) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SourceRow& r : b.rows)
    rows.push_back({{"source", r.source},
                    {"reference", r.reference},
                    {"f0_cents", r.f0_cents},
                    {"mfcc", r.mfcc},
                    {"loudness_db", r.loudness_db},
                    {"voiced_frames", r.voiced_frames}});
  return {{"sources", rows},
          {"mean", {{"f0_cents", b.mean.f0_cents}, {"mfcc", b.mean.mfcc}, {"loudness_db", b.mean.loudness_db},
                    {"voiced_frames", b.mean.voiced_frames}}}};
}

std::string line(const std::string& label, const std::string& ref, double f0, double mfcc, double loud, std::size_t frames) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %-5s %12.3f %10.4f %14.3f %8zu\n", label.c_str(), ref.c_str(), f0, mfcc, loud, frames);
  return buf;
}

void block_table(std::string& out, const std::string& prefix, const EvalBlock& b) {
  for (const SourceRow& r : b.rows)
    out += line(prefix + " src " + std::to_string(r.source), std::to_string(r.reference), r.f0_cents, r.mfcc,
                r.loudness_db, r.voiced_frames);
  out += line(prefix + " mean", "-", b.mean.f0_cents, b.mean.mfcc, b.mean.loudness_db, b.mean.voiced_frames);
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j = {{"assignment", report.assigned_by_index ? "index" : "best-permutation"},
                      {"estimate", block_json(report.estimate)}};
  if (report.reference_self) j["reference_vs_itself"] = block_json(*report.reference_self);
  return j.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report) {
  char head[160];
  std::snprintf(head, sizeof head, "%-16s %-5s %12s %10s %14s %8s\n", "row", "ref", "F0 [cent]", "MFCC", "Loudness [dB]",
                "voiced");
  std::string out = head;
  block_table(out, "est", report.estimate);
  if (report.reference_self) block_table(out, "ref", *report.reference_self);
  return out;
}

}  // namespace mixsynth::metrics
