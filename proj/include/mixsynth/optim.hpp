#pragma once

// Adam with a piecewise-constant learning rate, the mixture fitting loop
// (model weights frozen, synthesis parameters free) and autoencoder pretraining.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixsynth/dsp.hpp"
#include "mixsynth/nets.hpp"

namespace mixsynth::optim {

/// (first iteration, rate) pairs; the rate at iteration i is that of the last entry with step <= i.
struct LearningRateSchedule {
  std::vector<std::pair<std::size_t, double>> steps;

  /// 0.1, then 0.01 from iteration 1000 and 0.001 from iteration 2000.
  static LearningRateSchedule fitting();
  static LearningRateSchedule constant(double rate) { return {{{0, rate}}}; }
  double rate_at(std::size_t iteration) const;
  /// Steps must start at 0, strictly increase, and carry positive finite rates.
  void validate() const;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LearningRateSchedule schedule = LearningRateSchedule::fitting();
};

/// One bias-corrected Adam update at schedule.rate_at(state.step); advances
/// state.step. Throws RuntimeFailure on a non-finite gradient and leaves the
/// parameters untouched in that case.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state);

struct FreeVariables {
  bool f0 = true;
  bool z = true;
  bool loudness = true;
};

struct FitConfig {
  std::size_t iterations = 3000;
  LearningRateSchedule schedule = LearningRateSchedule::fitting();
  dsp::StftConfig loss = dsp::StftConfig::six_scale();
  FreeVariables free;
  std::uint64_t seed = 0;  // noise seed of the mixture model
  /// Called after each iteration with (iteration, loss before the update).
  std::function<void(std::size_t, double)> progress;
};

struct FitResult {
  std::vector<nets::SynthParams> params;
  /// Loss before each update, followed by the loss at the returned parameters.
  std::vector<double> loss_trace;
  std::vector<double> learning_rates;  // one per update
  bool diverged = false;
  std::string diagnostic;
};

/// Minimises the spectral loss between `observed` and the mixture of
/// `models` over the free synthesis parameters. On divergence returns the
/// last finite parameters and the trace up to the failure.
FitResult fit_mixture(const dsp::AudioBuffer& observed, std::span<const nets::SynthModel* const> models,
                      std::vector<nets::SynthParams> init, const FitConfig& cfg);

/// CSV with header iteration,loss,learning_rate.
std::string loss_trace_csv(const FitResult& result);

struct TrainingClip {
  dsp::AudioBuffer audio;
  std::vector<double> f0;  // Hz per frame
};

struct PretrainConfig {
  std::size_t epochs = 3000;
  double learning_rate = 1e-3;
  dsp::StftConfig loss = dsp::StftConfig::six_scale();
  double clip_norm = 100.0;
  std::uint64_t seed = 0;
  std::function<void(std::size_t, double)> progress;  // (epoch, mean loss)
};

struct PretrainResult {
  nets::SynthModel model;
  std::vector<double> epoch_loss;  // mean clip loss per epoch
};

/// Autoencoder training: loudness from the clip, z from the encoder, f0 from
/// the clip reference. One Adam step per clip, clips in order.
PretrainResult pretrain(const std::vector<TrainingClip>& clips, nets::SynthModel model, const PretrainConfig& cfg);

/// Loudness in model units (bels) per frame, as the decoder consumes it.
std::vector<double> model_loudness(const dsp::AudioBuffer& x, const nets::ModelConfig& cfg);

/// Autoencoder reconstruction of a clip with the given model.
double reconstruction_loss(const TrainingClip& clip, const nets::SynthModel& model, const dsp::StftConfig& cfg,
                           std::uint64_t seed);

}  // namespace mixsynth::optim
