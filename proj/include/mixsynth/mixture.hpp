#pragma once

// R source synthesizers summed into one mixture, and the multiscale
// spectral loss between an estimate and an observed signal.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mixsynth/autodiff.hpp"
#include "mixsynth/dsp.hpp"
#include "mixsynth/nets.hpp"

namespace mixsynth::mixture {

struct MixtureState {
  std::vector<nets::SynthParams> sources;
  std::vector<const nets::SynthModel*> models;  // may alias one shared model
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  /// Per-source noise seeds; when empty source r uses seed + r.
  std::vector<std::uint64_t> noise_seeds;

  std::size_t size() const noexcept { return sources.size(); }
  std::size_t frames() const { return sources.empty() ? 0 : sources.front().frames(); }
  std::uint64_t noise_seed(std::size_t r) const { return noise_seeds.empty() ? seed + r : noise_seeds.at(r); }
  void validate() const;
};

struct MixtureOutput {
  dsp::AudioBuffer mixture;
  std::vector<dsp::AudioBuffer> stems;
};

/// Sum of equal-length stems in ascending index order.
dsp::AudioBuffer mix_stems(const std::vector<dsp::AudioBuffer>& stems);

/// Stems are rendered independently; the mixture is their sum in ascending source order.
MixtureOutput synthesize_mixture(const MixtureState& state);

/// Graph inputs of one source.
struct SourceInputs {
  ad::DiffValue f0;
  ad::DiffValue z;
  ad::DiffValue loudness;
};

struct MixtureGraph {
  std::vector<ad::DiffValue> stems;
  ad::DiffValue mixture;
};

using Excitations = std::vector<std::shared_ptr<const ad::NoiseExcitation>>;
Excitations make_excitations(const MixtureState& state);

/// Records the mixture for `inputs` (one per source) with frozen model weights.
MixtureGraph render_mixture(ad::DiffGraph& g, const MixtureState& state, std::span<const SourceInputs> inputs,
                            const Excitations& excitations);

/// Multiscale spectral loss against a fixed signal whose spectrograms are computed once:
/// sum over scales of L1(|Y|, |Y^|) + L1(log|Y|, log|Y^|).
class SpectralLoss {
 public:
  SpectralLoss(const dsp::AudioBuffer& target, const dsp::StftConfig& cfg);
  ad::DiffValue operator()(ad::DiffValue estimate) const;
  std::size_t n_samples() const noexcept { return n_samples_; }

 private:
  struct Scale {
    std::size_t frame = 0;
    std::size_t hop = 0;
    std::vector<double> window;
    Tensor magnitude;
    Tensor log_magnitude;
  };
  std::size_t n_samples_ = 0;
  std::vector<Scale> scales_;
};

/// Plain-signal loss value; symmetric in (a, b).
double spectral_loss(const dsp::AudioBuffer& a, const dsp::AudioBuffer& b, const dsp::StftConfig& cfg);

/// Records every source parameter as a variable and returns L(observed, mixture).
ad::DiffValue mixture_loss(ad::DiffGraph& g, const MixtureState& state, const dsp::AudioBuffer& observed,
                           const dsp::StftConfig& cfg);

}  // namespace mixsynth::mixture
