#pragma once

// Initialisation helpers and segment-parallel fitting shared by the CLI and tests.

#include <cstdint>
#include <vector>

#include "mixsynth/optim.hpp"
#include "mixsynth/score.hpp"

namespace mixsynth::pipeline {

/// T x D draws from N(0, 1).
Tensor random_z(std::size_t frames, std::size_t latent_dim, std::uint64_t seed);

/// f0 and loudness from the score, z random. Sources without notes fall back
/// to `fallback_hz` at l_low. Source r draws z with seed + r.
std::vector<nets::SynthParams> score_init(const score::Score& score, std::size_t n_sources, std::size_t frames,
                                          const nets::ModelConfig& model, double l_high, double l_low,
                                          std::uint64_t seed, double fallback_hz = 220.0);

/// Constant pitch per source (one value, or one per source) at l_high, z random.
std::vector<nets::SynthParams> flat_init(const std::vector<double>& pitches_hz, std::size_t n_sources,
                                         std::size_t frames, const nets::ModelConfig& model, double l_high,
                                         std::uint64_t seed);

/// Cuts the problem into runs of `segment_frames` frames (0 = one segment),
/// fits them on up to `jobs` threads and stitches parameters and traces.
/// The trace of a segmented fit is the per-iteration sum over segments.
optim::FitResult fit_segments(const dsp::AudioBuffer& observed, std::span<const nets::SynthModel* const> models,
                              const std::vector<nets::SynthParams>& init, const optim::FitConfig& cfg,
                              std::size_t segment_frames, std::size_t jobs);

}  // namespace mixsynth::pipeline
