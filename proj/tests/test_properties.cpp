// Randomised invariant checks. Each property draws its cases from a seeded
// generator so a failure names a reproducible trial.
#include <catch_amalgamated.hpp>

#include <functional>

#include "mixsynth/dsp.hpp"
#include "mixsynth/io.hpp"
#include "mixsynth/mixture.hpp"
#include "mixsynth/ops.hpp"
#include "mixsynth/score.hpp"
#include "mixsynth/synth.hpp"
#include "support.hpp"

using namespace mixsynth;

namespace {

void for_all(std::uint64_t seed, int trials, const std::function<void(testing::Gen&)>& body) {
  for (int i = 0; i < trials; ++i) {
    testing::Gen g(seed * 7919 + static_cast<std::uint64_t>(i));
    INFO("trial " << i);
    body(g);
  }
}

// a small random differentiable function of a vector
ad::DiffValue random_function(ad::DiffValue x, int kind) {
  switch (kind) {
    case 0: return ad::sum(ad::mul(ad::sin(x), x));
    case 1: return ad::sum(ad::exp(ad::scale(x, 0.3)));
    case 2: return ad::sum(ad::cumsum(ad::sigmoid(x)));
    default: return ad::sum(ad::silu(ad::offset(x, 0.5)));
  }
}

score::Score random_score(testing::Gen& g, std::size_t R, double duration) {
  score::Score s;
  for (std::size_t r = 0; r < R; ++r) {
    score::ScoreTrack t{r, {}};
    double at = g.uniform(0.0, 0.5);
    while (at < duration - 0.3) {
      const double end = std::min(duration, at + g.uniform(0.1, 1.0));
      t.events.push_back({at, end, static_cast<int>(g.index(30, 90))});
      at = end + (g.uniform(0, 1) < 0.5 ? 0.0 : g.uniform(0.05, 0.5));
    }
    s.tracks.push_back(t);
  }
  return s;
}

}  // namespace

TEST_CASE("property: backward is linear in the loss", "[property]") {
  for_all(1, 25, [](testing::Gen& g) {
    const std::size_t n = g.index(1, 20);
    const Tensor x0 = g.tensor({n}, -2, 2);
    const double a = g.uniform(-3, 3), b = g.uniform(-3, 3);
    const int kf = static_cast<int>(g.index(0, 3)), kg = static_cast<int>(g.index(0, 3));
    auto grad_of = [&](double wa, double wb) {
      ad::DiffGraph graph;
      const ad::DiffValue x = graph.variable(x0);
      graph.backward(ad::add(ad::scale(random_function(x, kf), wa), ad::scale(random_function(x, kg), wb)));
      return x.grad().storage();
    };
    const auto both = grad_of(a, b), f = grad_of(1, 0), h = grad_of(0, 1);
    for (std::size_t i = 0; i < n; ++i) CHECK(both[i] == Catch::Approx(a * f[i] + b * h[i]).margin(1e-12));
  });
}

TEST_CASE("property: identical graphs give bitwise identical gradients", "[property]") {
  for_all(2, 10, [](testing::Gen& g) {
    const nets::ModelConfig cfg = testing::small_config();
    const auto model = nets::SynthModel::initialize(cfg, g.index(0, 1000));
    const std::size_t T = g.index(2, 8);
    mixture::MixtureState s;
    s.n_samples = T * cfg.hop();
    s.seed = g.index(0, 100);
    s.sources.push_back({g.uniform_vec(T, 80, 800), g.tensor({T, cfg.latent_dim}, -1, 1), g.uniform_vec(T, -6, -2)});
    s.models.push_back(&model);
    const dsp::AudioBuffer y{g.normal_vec(s.n_samples, 0.1)};
    dsp::StftConfig lc;
    lc.frame_ms = {16};
    auto run = [&] {
      ad::DiffGraph graph;
      const ad::DiffValue f0 = graph.variable(Tensor::vector(s.sources[0].f0));
      const mixture::SourceInputs in[] = {{f0, graph.variable(s.sources[0].z), graph.constant(Tensor::vector(s.sources[0].loudness))}};
      graph.backward(mixture::SpectralLoss(y, lc)(mixture::render_mixture(graph, s, in, mixture::make_excitations(s)).mixture));
      return f0.grad().storage();
    };
    CHECK(testing::bitwise_equal(run(), run()));
  });
}

TEST_CASE("property: stft magnitudes are nonnegative", "[property]") {
  for_all(3, 20, [](testing::Gen& g) {
    const auto x = g.normal_vec(g.index(1, 3000), g.uniform(0.001, 10));
    const std::size_t frame = g.index(2, 300);
    const Tensor m = dsp::stft_magnitude(x, frame, g.index(1, frame));
    for (double v : m.values()) CHECK(v >= 0.0);
  });
}

TEST_CASE("property: loudness moves by 20 log10(gain)", "[property]") {
  for_all(4, 10, [](testing::Gen& g) {
    const dsp::AudioBuffer x{g.normal_vec(512 * g.index(2, 20), 0.1)};
    const double gain = std::exp(g.uniform(-3, 3));
    dsp::AudioBuffer y = x;
    for (double& v : y.samples) v *= gain;
    const auto a = dsp::a_weighted_loudness(x), b = dsp::a_weighted_loudness(y);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(b[t] - a[t] == Catch::Approx(20.0 * std::log10(gain)).margin(1e-8));
  });
}

TEST_CASE("property: mfcc ignores polarity", "[property]") {
  for_all(5, 5, [](testing::Gen& g) {
    dsp::AudioBuffer x{g.normal_vec(g.index(2048, 6000), g.uniform(0.01, 1))};
    dsp::AudioBuffer y = x;
    for (double& v : y.samples) v = -v;
    const dsp::MfccConfig c = dsp::MfccConfig::evaluation();
    CHECK(testing::bitwise_equal(dsp::mfcc(x, c).values(), dsp::mfcc(y, c).values()));
  });
}

TEST_CASE("property: upsampling is linear", "[property]") {
  for_all(6, 25, [](testing::Gen& g) {
    const std::size_t T = g.index(1, 12), hop = g.index(1, 40), total = T * hop + g.index(0, hop), first = g.index(0, hop);
    const auto u = g.uniform_vec(T, -1, 1), v = g.uniform_vec(T, -1, 1);
    const double a = g.uniform(-2, 2), b = g.uniform(-2, 2);
    std::vector<double> w(T);
    for (std::size_t t = 0; t < T; ++t) w[t] = a * u[t] + b * v[t];
    const auto uw = dsp::upsample_framewise(w, hop, total, first), uu = dsp::upsample_framewise(u, hop, total, first),
               uv = dsp::upsample_framewise(v, hop, total, first);
    for (std::size_t i = 0; i < total; ++i) CHECK(uw[i] == Catch::Approx(a * uu[i] + b * uv[i]).margin(1e-12));
  });
}

TEST_CASE("property: harmonic synth scales exactly with amplitude and is band limited", "[property]") {
  for_all(7, 8, [](testing::Gen& g) {
    const std::size_t T = g.index(2, 10), K = g.index(1, 12), N = T * 512;
    const synth::SynthConfig cfg{16000.0, 512, K, 9};
    const auto f = g.uniform_vec(T, 200, 3000);
    synth::ControlSignals c;
    c.amplitude = g.uniform_vec(T, 0, 1);
    c.harmonic_distribution = g.tensor({T, K}, 0, 1);
    c.noise_magnitudes = Tensor({T, 9}, 0.0);
    const auto a = synth::harmonic_synth(f, c, N, cfg);
    for (double& v : c.amplitude) v *= 2.0;
    const auto b = synth::harmonic_synth(f, c, N, cfg);
    for (std::size_t i = 0; i < N; ++i) CHECK(b.samples[i] == 2.0 * a.samples[i]);
    // only the harmonics under Nyquist contribute: zeroing the rest changes nothing
    synth::ControlSignals low = c;
    const double fmin = *std::min_element(f.begin(), f.end());
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < K; ++k)
        if (static_cast<double>(k + 1) * fmin >= 8000.0) low.harmonic_distribution.at(t, k) = 0.0;
    const auto full = synth::harmonic_synth(std::vector<double>(T, fmin), c, N, cfg);
    const auto masked = synth::harmonic_synth(std::vector<double>(T, fmin), low, N, cfg);
    CHECK(testing::bitwise_equal(full.samples, masked.samples));
  });
}

TEST_CASE("property: noise synth is reproducible", "[property]") {
  for_all(8, 5, [](testing::Gen& g) {
    const std::size_t T = g.index(1, 10), M = g.index(2, 20);
    const synth::SynthConfig cfg{16000.0, 512, 1, M};
    const Tensor mags = g.tensor({T, M}, 0, 1);
    const std::uint64_t seed = g.index(0, 1u << 30);
    CHECK(testing::bitwise_equal(synth::noise_synth(mags, T * 512, seed, cfg).samples,
                                 synth::noise_synth(mags, T * 512, seed, cfg).samples));
  });
}

TEST_CASE("property: harmonic distribution stays on the simplex", "[property]") {
  const auto cfg = testing::small_config();
  const auto model = nets::SynthModel::initialize(cfg, 3);
  for_all(9, 20, [&](testing::Gen& g) {
    const std::size_t T = g.index(1, 6);
    const double sd = std::exp(g.uniform(-3, 4));
    nets::SynthParams p{g.uniform_vec(T, 1e-3, 8000), Tensor({T, cfg.latent_dim}), g.normal_vec(T, sd)};
    for (double& v : p.z.values()) v = g.normal(sd);
    const auto c = nets::decode(p, model);
    for (std::size_t t = 0; t < T; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < cfg.n_harmonics; ++k) {
        CHECK(c.harmonic_distribution.at(t, k) >= 0.0);
        s += c.harmonic_distribution.at(t, k);
      }
      CHECK(s == Catch::Approx(1.0).margin(1e-12));
    }
  });
}

TEST_CASE("property: mixture additivity, nonnegative loss and gradient flow", "[property]") {
  const auto cfg = testing::small_config();
  const auto model = nets::SynthModel::initialize(cfg, 4);
  for_all(10, 6, [&](testing::Gen& g) {
    const std::size_t R = g.index(1, 3), T = g.index(2, 8);
    mixture::MixtureState s;
    s.seed = g.index(0, 1000);
    s.n_samples = T * cfg.hop();
    for (std::size_t r = 0; r < R; ++r) {
      s.sources.push_back({g.uniform_vec(T, 80, 900), g.tensor({T, cfg.latent_dim}, -1, 1), g.uniform_vec(T, -6, -2)});
      s.models.push_back(&model);
    }
    const auto out = mixture::synthesize_mixture(s);
    std::vector<double> sum(s.n_samples, 0.0);
    for (const auto& st : out.stems)
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += st.samples[i];
    CHECK(testing::max_abs_diff(out.mixture.samples, sum) == 0.0);

    dsp::StftConfig lc;
    lc.frame_ms = {16, 32};
    const dsp::AudioBuffer y{g.normal_vec(s.n_samples, g.uniform(0, 0.2))};
    ad::DiffGraph graph;
    std::vector<mixture::SourceInputs> in;
    for (const auto& p : s.sources)
      in.push_back({graph.variable(Tensor::vector(p.f0)), graph.variable(p.z), graph.variable(Tensor::vector(p.loudness))});
    const ad::DiffValue loss = mixture::SpectralLoss(y, lc)(mixture::render_mixture(graph, s, in, mixture::make_excitations(s)).mixture);
    CHECK(loss.item() >= 0.0);
    graph.backward(loss);
    double norm = 0.0;
    for (double v : in.back().z.grad().values()) norm += v * v;
    CHECK(norm > 0.0);
  });
}

TEST_CASE("property: init_f0 is positive and octave transposition doubles it", "[property]") {
  for_all(11, 25, [](testing::Gen& g) {
    const score::Score s = random_score(g, 1, 6.0);
    if (s.tracks[0].events.empty()) return;
    const auto roll = score::rasterize(s.tracks[0], 180, 32.0);
    if (std::none_of(roll.begin(), roll.end(), [](int p) { return p >= 0; })) return;
    score::ScoreTrack up = s.tracks[0];
    for (auto& e : up.events) e.note += 12;
    const auto f = score::init_f0(roll), f2 = score::init_f0(score::rasterize(up, 180, 32.0));
    for (std::size_t t = 0; t < roll.size(); ++t) {
      CHECK(f[t] > 0.0);
      if (roll[t] >= 0) CHECK(f2[t] == Catch::Approx(2.0 * f[t]).epsilon(1e-14));
    }
  });
}

TEST_CASE("property: shifting events by one hop shifts the roll by one frame", "[property]") {
  for_all(12, 25, [](testing::Gen& g) {
    const score::Score s = random_score(g, 1, 5.0);
    score::ScoreTrack shifted = s.tracks[0];
    for (auto& e : shifted.events) {
      e.onset += 0.032;
      e.offset += 0.032;
    }
    const auto a = score::rasterize(s.tracks[0], 200, 32.0), b = score::rasterize(shifted, 200, 32.0);
    for (std::size_t t = 1; t + 1 < a.size(); ++t) CHECK(b[t + 1] == a[t]);
  });
}

TEST_CASE("property: param files round trip byte for byte", "[property]") {
  for_all(13, 10, [](testing::Gen& g) {
    io::ParamFile pf;
    const std::size_t R = g.index(1, 4), T = g.index(1, 30), D = g.index(1, 8);
    for (std::size_t r = 0; r < R; ++r)
      pf.sources.push_back({g.uniform_vec(T, 1, 4000), g.tensor({T, D}, -5, 5), g.uniform_vec(T, -12, 0)});
    const std::string a = io::params_to_json(pf);
    CHECK(io::params_to_json(io::params_from_json(a)) == a);
  });
}
