#include "mixsynth/optim.hpp"

#include <cmath>
#include <sstream>

#include "mixsynth/error.hpp"
#include "mixsynth/mixture.hpp"
#include "mixsynth/ops.hpp"

namespace mixsynth::optim {

LearningRateSchedule LearningRateSchedule::fitting() { return {{{0, 0.1}, {1000, 0.01}, {2000, 0.001}}}; }

double LearningRateSchedule::rate_at(std::size_t iteration) const {
  if (steps.empty()) throw ValidationError("schedule: no entries");
  double rate = steps.front().second;
  for (const auto& [step, r] : steps) {
    if (step > iteration) break;
    rate = r;
  }
  return rate;
}

void LearningRateSchedule::validate() const {
  if (steps.empty() || steps.front().first != 0) throw ValidationError("schedule: first entry must start at iteration 0");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i].second > 0.0) || !std::isfinite(steps[i].second))
      throw ValidationError("schedule: rates must be positive and finite");
    if (i > 0 && steps[i].first <= steps[i - 1].first) throw ValidationError("schedule: steps must strictly increase");
  }
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) + " gradients");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p]->same_shape(*grads[p]))
      throw ShapeError("adam_step: parameter " + std::to_string(p) + " is " + shape_string(params[p]->shape()) +
                       ", gradient is " + shape_string(grads[p]->shape()));
    for (double g : grads[p]->values())
      if (!std::isfinite(g)) throw RuntimeFailure("non-finite gradient in parameter " + std::to_string(p));
  }
  if (state.m.empty()) {
    for (const Tensor* t : params) {
      state.m.push_back(Tensor::zeros_like(*t));
      state.v.push_back(Tensor::zeros_like(*t));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed between steps");
  const double lr = state.schedule.rate_at(state.step);
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    double* x = params[p]->data();
    const double* g = grads[p]->data();
    double* m = state.m[p].data();
    double* v = state.v[p].data();
    for (std::size_t i = 0, n = params[p]->size(); i < n; ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
  ++state.step;
}

namespace {

struct SourceTensors {
  Tensor f0, z, loudness;
};

std::vector<nets::SynthParams> to_params(const std::vector<SourceTensors>& v) {
  std::vector<nets::SynthParams> out;
  for (const SourceTensors& s : v) out.push_back({s.f0.storage(), s.z, s.loudness.storage()});
  return out;
}

}  // namespace

FitResult fit_mixture(const dsp::AudioBuffer& observed, std::span<const nets::SynthModel* const> models,
                      std::vector<nets::SynthParams> init, const FitConfig& cfg) {
  cfg.schedule.validate();
  mixture::MixtureState state;
  state.sources = init;
  state.models.assign(models.begin(), models.end());
  state.seed = cfg.seed;
  state.n_samples = observed.size();
  state.validate();
  const std::size_t hop = state.models[0]->config.hop();
  if (dsp::frame_count(observed.size(), hop) != state.frames())
    throw ValidationError("fit: observed signal of " + std::to_string(observed.size()) + " samples gives " +
                          std::to_string(dsp::frame_count(observed.size(), hop)) + " frames, parameters have " +
                          std::to_string(state.frames()));

  const mixture::Excitations exc = mixture::make_excitations(state);
  const mixture::SpectralLoss loss_fn(observed, cfg.loss);

  std::vector<SourceTensors> cur;
  for (const nets::SynthParams& p : init) cur.push_back({Tensor::vector(p.f0), p.z, Tensor::vector(p.loudness)});

  AdamState adam;
  adam.schedule = cfg.schedule;
  FitResult result;

  auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
    ad::DiffGraph g;
    std::vector<mixture::SourceInputs> inputs;
    auto leaf = [&](const Tensor& t, bool free) { return (with_grad && free) ? g.variable(t) : g.constant(t); };
    for (const SourceTensors& s : cur)
      inputs.push_back({leaf(s.f0, cfg.free.f0), leaf(s.z, cfg.free.z), leaf(s.loudness, cfg.free.loudness)});
    const ad::DiffValue loss = loss_fn(mixture::render_mixture(g, state, inputs, exc).mixture);
    const double value = loss.item();
    if (with_grad && std::isfinite(value)) {
      g.backward(loss);
      for (const mixture::SourceInputs& in : inputs) {
        if (cfg.free.f0) grads->push_back(in.f0.grad());
        if (cfg.free.z) grads->push_back(in.z.grad());
        if (cfg.free.loudness) grads->push_back(in.loudness.grad());
      }
    }
    return value;
  };

  const bool any_free = cfg.free.f0 || cfg.free.z || cfg.free.loudness;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<Tensor> grads;
    const double value = evaluate(any_free, &grads);
    if (!std::isfinite(value)) {
      result.diverged = true;
      result.diagnostic = "iteration " + std::to_string(it) + ": loss is not finite";
      result.params = to_params(cur);
      return result;
    }
    result.loss_trace.push_back(value);
    if (cfg.progress) cfg.progress(it, value);
    if (!any_free) continue;
    std::vector<Tensor*> ps;
    for (SourceTensors& s : cur) {
      if (cfg.free.f0) ps.push_back(&s.f0);
      if (cfg.free.z) ps.push_back(&s.z);
      if (cfg.free.loudness) ps.push_back(&s.loudness);
    }
    std::vector<const Tensor*> gs;
    for (const Tensor& t : grads) gs.push_back(&t);
    result.learning_rates.push_back(cfg.schedule.rate_at(adam.step));
    try {
      adam_step(ps, gs, adam);
    } catch (const RuntimeFailure& e) {
      result.learning_rates.pop_back();
      result.diverged = true;
      result.diagnostic = "iteration " + std::to_string(it) + ": " + e.what();
      result.params = to_params(cur);
      return result;
    }
  }
  const double final_value = evaluate(false, nullptr);
  result.params = to_params(cur);
  if (!std::isfinite(final_value)) {
    result.diverged = true;
    result.diagnostic = "iteration " + std::to_string(cfg.iterations) + ": loss is not finite";
    return result;
  }
  result.loss_trace.push_back(final_value);
  return result;
}

std::string loss_trace_csv(const FitResult& result) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,loss,learning_rate\n";
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
    os << i << ',' << result.loss_trace[i] << ',';
    if (i < result.learning_rates.size()) os << result.learning_rates[i];
    os << '\n';
  }
  return os.str();
}

std::vector<double> model_loudness(const dsp::AudioBuffer& x, const nets::ModelConfig& cfg) {
  std::vector<double> l = dsp::a_weighted_loudness(x, cfg.hop_ms, 2.0 * cfg.hop_ms);
  for (double& v : l) v /= 10.0;
  return l;
}

namespace {

struct PreparedClip {
  Tensor f0;
  Tensor loudness;
  Tensor features;
  std::shared_ptr<const ad::NoiseExcitation> excitation;
  mixture::SpectralLoss loss;
};

PreparedClip prepare(const TrainingClip& clip, const nets::SynthModel& model, const dsp::StftConfig& cfg,
                     std::uint64_t seed) {
  const std::size_t hop = model.config.hop();
  const std::size_t T = clip.f0.size();
  if (clip.audio.size() == 0 || clip.audio.size() != T * hop)
    throw ValidationError("pretrain: clip of " + std::to_string(clip.audio.size()) + " samples does not match " +
                          std::to_string(T) + " f0 frames of " + std::to_string(hop) + " samples");
  return {Tensor::vector(clip.f0), Tensor::vector(model_loudness(clip.audio, model.config)),
          dsp::mfcc(clip.audio, model.config.encoder_mfcc()),
          synth::make_excitation(T, seed, model.config.synth()), mixture::SpectralLoss(clip.audio, cfg)};
}

ad::DiffValue clip_loss(ad::DiffGraph& g, const nets::BoundModel& b, const PreparedClip& c, std::size_t n_samples) {
  const ad::DiffValue z = nets::encode(b, g.constant(c.features));
  return c.loss(nets::render(b, g.constant(c.f0), z, g.constant(c.loudness), c.excitation, n_samples));
}

}  // namespace

double reconstruction_loss(const TrainingClip& clip, const nets::SynthModel& model, const dsp::StftConfig& cfg,
                           std::uint64_t seed) {
  const PreparedClip c = prepare(clip, model, cfg, seed);
  ad::DiffGraph g;
  return clip_loss(g, nets::bind(g, model, false), c, clip.audio.size()).item();
}

PretrainResult pretrain(const std::vector<TrainingClip>& clips, nets::SynthModel model, const PretrainConfig& cfg) {
  if (clips.empty()) throw ValidationError("pretrain: empty dataset");
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("pretrain: learning rate must be positive");
  model.validate();
  std::vector<PreparedClip> prepared;
  for (std::size_t i = 0; i < clips.size(); ++i) prepared.push_back(prepare(clips[i], model, cfg.loss, cfg.seed + i));

  AdamState adam;
  adam.schedule = LearningRateSchedule::constant(cfg.learning_rate);
  Tensor reverb_taps = Tensor::vector(model.reverb.taps);
  PretrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      ad::DiffGraph g;
      const nets::BoundModel b = nets::bind(g, model, true);
      const ad::DiffValue loss = clip_loss(g, b, prepared[i], clips[i].audio.size());
      const double value = loss.item();
      if (!std::isfinite(value))
        throw RuntimeFailure("pretrain: epoch " + std::to_string(epoch) + ", clip " + std::to_string(i) + ": loss is not finite");
      total += value;
      g.backward(loss);

      std::vector<Tensor*> ps = model.parameters();
      if (model.reverb.enabled) ps.push_back(&reverb_taps);
      std::vector<Tensor> grads;
      double norm2 = 0.0;
      for (const ad::DiffValue& v : b.all) {
        grads.push_back(v.grad());
        for (double x : v.grad().values()) norm2 += x * x;
      }
      const double norm = std::sqrt(norm2);
      if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) {
        const double s = cfg.clip_norm / norm;
        for (Tensor& t : grads)
          for (double& x : t.values()) x *= s;
      }
      std::vector<const Tensor*> gs;
      for (const Tensor& t : grads) gs.push_back(&t);
      try {
        adam_step(ps, gs, adam);
      } catch (const RuntimeFailure& e) {
        throw RuntimeFailure("pretrain: epoch " + std::to_string(epoch) + ", clip " + std::to_string(i) + ": " + e.what());
      }
      if (model.reverb.enabled) {
        model.reverb.taps = reverb_taps.storage();
        model.reverb.taps[0] = 1.0;
      }
    }
    const double mean = total / static_cast<double>(prepared.size());
    result.epoch_loss.push_back(mean);
    if (cfg.progress) cfg.progress(epoch, mean);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace mixsynth::optim
