#include "mixsynth/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

#include "mixsynth/error.hpp"

namespace mixsynth::pipeline {

Tensor random_z(std::size_t frames, std::size_t latent_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z({frames, latent_dim});
  for (double& v : z.values()) v = normal(rng);
  return z;
}

std::vector<nets::SynthParams> score_init(const score::Score& sc, std::size_t n_sources, std::size_t frames,
                                          const nets::ModelConfig& model, double l_high, double l_low,
                                          std::uint64_t seed, double fallback_hz) {
  if (sc.tracks.size() > n_sources)
    throw ValidationError("score names " + std::to_string(sc.tracks.size()) + " sources, fitting " + std::to_string(n_sources));
  std::vector<nets::SynthParams> out;
  for (std::size_t r = 0; r < n_sources; ++r) {
    score::ScoreTrack track;
    track.source = r;
    if (r < sc.tracks.size()) track = sc.tracks[r];
    const score::PianoRoll roll = score::rasterize(track, frames, model.hop_ms, model.sample_rate);
    nets::SynthParams p;
    const bool any = std::any_of(roll.begin(), roll.end(), [](int v) { return v >= 0; });
    p.f0 = any ? score::init_f0(roll) : std::vector<double>(frames, fallback_hz);
    p.loudness = score::init_loudness(roll, l_high, l_low);
    p.z = random_z(frames, model.latent_dim, seed + r);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<nets::SynthParams> flat_init(const std::vector<double>& pitches_hz, std::size_t n_sources,
                                         std::size_t frames, const nets::ModelConfig& model, double l_high,
                                         std::uint64_t seed) {
  if (pitches_hz.empty() || (pitches_hz.size() != 1 && pitches_hz.size() != n_sources))
    throw ValidationError("flat pitch: give one frequency or one per source");
  std::vector<nets::SynthParams> out;
  for (std::size_t r = 0; r < n_sources; ++r) {
    const double hz = pitches_hz[std::min(r, pitches_hz.size() - 1)];
    if (!(hz > 0.0)) throw ValidationError("flat pitch: frequencies must be positive");
    out.push_back({std::vector<double>(frames, hz), random_z(frames, model.latent_dim, seed + r),
                   std::vector<double>(frames, l_high)});
  }
  return out;
}

optim::FitResult fit_segments(const dsp::AudioBuffer& observed, std::span<const nets::SynthModel* const> models,
                              const std::vector<nets::SynthParams>& init, const optim::FitConfig& cfg,
                              std::size_t segment_frames, std::size_t jobs) {
  if (init.empty()) throw ValidationError("fit: no sources");
  const std::size_t T = init.front().frames();
  if (segment_frames == 0 || segment_frames >= T) return optim::fit_mixture(observed, models, init, cfg);
  const std::size_t hop = models.front()->config.hop();
  if (observed.size() != T * hop)
    throw ValidationError("fit: segmenting needs exactly " + std::to_string(T) + " frames of " + std::to_string(hop) + " samples");

  struct Segment {
    std::size_t begin, end;
    optim::FitResult result;
    std::string error;
  };
  std::vector<Segment> segs;
  for (std::size_t b = 0; b < T; b += segment_frames) segs.push_back({b, std::min(T, b + segment_frames), {}, {}});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < segs.size();) {
      Segment& s = segs[i];
      try {
        dsp::AudioBuffer part{{observed.samples.begin() + static_cast<std::ptrdiff_t>(s.begin * hop),
                               observed.samples.begin() + static_cast<std::ptrdiff_t>(s.end * hop)},
                              observed.sample_rate};
        std::vector<nets::SynthParams> sub;
        for (const nets::SynthParams& p : init) {
          nets::SynthParams q;
          q.f0.assign(p.f0.begin() + static_cast<std::ptrdiff_t>(s.begin), p.f0.begin() + static_cast<std::ptrdiff_t>(s.end));
          q.loudness.assign(p.loudness.begin() + static_cast<std::ptrdiff_t>(s.begin),
                            p.loudness.begin() + static_cast<std::ptrdiff_t>(s.end));
          const std::size_t D = p.z.cols();
          q.z = Tensor({s.end - s.begin, D},
                       std::vector<double>(p.z.storage().begin() + static_cast<std::ptrdiff_t>(s.begin * D),
                                           p.z.storage().begin() + static_cast<std::ptrdiff_t>(s.end * D)));
          sub.push_back(std::move(q));
        }
        optim::FitConfig c = cfg;
        c.seed = cfg.seed + 1000 * i;
        if (i != 0) c.progress = nullptr;
        s.result = optim::fit_mixture(part, models, std::move(sub), c);
      } catch (const std::exception& e) {
        s.error = "segment " + std::to_string(i) + ": " + e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < std::max<std::size_t>(1, std::min(jobs, segs.size())); ++j) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  for (const Segment& s : segs)
    if (!s.error.empty()) throw ValidationError(s.error);
  optim::FitResult out;
  out.params = init;
  for (std::size_t r = 0; r < init.size(); ++r) {
    const std::size_t D = init[r].z.cols();
    for (const Segment& s : segs) {
      const nets::SynthParams& q = s.result.params[r];
      std::copy(q.f0.begin(), q.f0.end(), out.params[r].f0.begin() + static_cast<std::ptrdiff_t>(s.begin));
      std::copy(q.loudness.begin(), q.loudness.end(), out.params[r].loudness.begin() + static_cast<std::ptrdiff_t>(s.begin));
      std::copy(q.z.storage().begin(), q.z.storage().end(),
                out.params[r].z.values().begin() + static_cast<std::ptrdiff_t>(s.begin * D));
    }
  }
  std::size_t len = segs.front().result.loss_trace.size();
  for (const Segment& s : segs) {
    len = std::min(len, s.result.loss_trace.size());
    if (s.result.diverged && !out.diverged) {
      out.diverged = true;
      out.diagnostic = "segment " + std::to_string(&s - segs.data()) + ": " + s.result.diagnostic;
    }
  }
  out.loss_trace.assign(len, 0.0);
  for (const Segment& s : segs)
    for (std::size_t i = 0; i < len; ++i) out.loss_trace[i] += s.result.loss_trace[i];
  out.learning_rates = segs.front().result.learning_rates;
  if (out.learning_rates.size() > len) out.learning_rates.resize(len);
  return out;
}

}  // namespace mixsynth::pipeline
