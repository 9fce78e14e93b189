#include "grad_cases.hpp"

#include "mixsynth/dsp.hpp"
#include "mixsynth/mixture.hpp"
#include "mixsynth/nets.hpp"
#include "mixsynth/ops.hpp"
#include "mixsynth/synth.hpp"
#include "support.hpp"

namespace testing {

using namespace mixsynth;
using ad::DiffGraph;
using ad::DiffValue;

namespace {

// sum(w * v) with w fixed by `seed`
DiffValue wsum(DiffValue v, std::uint64_t seed) {
  Gen g(seed);
  const Tensor w = g.tensor(v.shape(), -1.0, 1.0);
  return ad::sum(ad::mul(v, v.graph()->constant(w)));
}

DiffValue col(DiffValue x, std::size_t c) { return ad::slice_cols(x, c, c + 1); }

GradCase unary_case(std::string name, DiffValue (*op)(DiffValue), double lo, double hi, std::uint64_t seed) {
  Gen g(seed);
  return {std::move(name), [op](DiffGraph&, DiffValue x) { return wsum(op(x), 11); }, g.tensor({3, 4}, lo, hi)};
}

}  // namespace

std::vector<GradCase> primitive_cases() {
  Gen g(2024);
  std::vector<GradCase> cs;
  cs.push_back({"add", [](DiffGraph&, DiffValue x) { return wsum(ad::add(col(x, 0), col(x, 1)), 1); }, g.tensor({6, 2}, -2, 2)});
  cs.push_back({"sub", [](DiffGraph&, DiffValue x) { return wsum(ad::sub(col(x, 0), col(x, 1)), 2); }, g.tensor({6, 2}, -2, 2)});
  cs.push_back({"mul", [](DiffGraph&, DiffValue x) { return wsum(ad::mul(col(x, 0), col(x, 1)), 3); }, g.tensor({6, 2}, -2, 2)});
  cs.push_back({"div", [](DiffGraph&, DiffValue x) { return wsum(ad::div(col(x, 0), col(x, 1)), 4); }, g.tensor({6, 2}, 0.5, 2)});
  cs.push_back({"broadcast", [](DiffGraph&, DiffValue x) { return wsum(ad::broadcast(x, {3, 5}), 5); }, Tensor::scalar(0.7)});
  cs.push_back({"scale", [](DiffGraph&, DiffValue x) { return wsum(ad::scale(x, -1.7), 6); }, g.tensor({5}, -1, 1)});
  cs.push_back({"offset", [](DiffGraph&, DiffValue x) { return wsum(ad::offset(x, 2.5), 7); }, g.tensor({5}, -1, 1)});
  cs.push_back(unary_case("exp", [](DiffValue a) { return ad::exp(a); }, -2, 2, 8));
  cs.push_back(unary_case("log", [](DiffValue a) { return ad::log(a); }, 0.1, 3, 9));
  cs.push_back(unary_case("sin", [](DiffValue a) { return ad::sin(a); }, -4, 4, 10));
  cs.push_back(unary_case("sigmoid", [](DiffValue a) { return ad::sigmoid(a); }, -4, 4, 12));
  cs.push_back(unary_case("silu", [](DiffValue a) { return ad::silu(a); }, -4, 4, 13));
  cs.push_back(unary_case("power", [](DiffValue a) { return ad::power(a, 2.302585); }, 0.2, 2, 14));
  cs.push_back({"cumsum", [](DiffGraph&, DiffValue x) { return wsum(ad::cumsum(x), 15); }, g.tensor({7, 3}, -1, 1)});
  cs.push_back({"upsample", [](DiffGraph&, DiffValue x) { return wsum(ad::upsample(x, 4, 23, 3), 16); }, g.tensor({5}, -1, 1)});
  cs.push_back({"upsample_rows", [](DiffGraph&, DiffValue x) { return wsum(ad::upsample(x, 5, 30, 5), 17); },
                g.tensor({5, 3}, -1, 1)});
  {
    const Tensor w = g.tensor({4, 3}, -1, 1), b = g.tensor({3}, -1, 1), xin = g.tensor({5, 4}, -1, 1);
    cs.push_back({"affine_x", [w, b](DiffGraph& gr, DiffValue x) { return wsum(ad::affine(x, gr.constant(w), gr.constant(b)), 18); }, xin});
    cs.push_back({"affine_w", [xin, b](DiffGraph& gr, DiffValue x) { return wsum(ad::affine(gr.constant(xin), x, gr.constant(b)), 18); }, w});
    cs.push_back({"affine_b", [xin, w](DiffGraph& gr, DiffValue x) { return wsum(ad::affine(gr.constant(xin), gr.constant(w), x), 18); }, b});
  }
  {
    const Tensor m = g.tensor({4, 6}, -1, 1);
    cs.push_back({"matmul_const", [m](DiffGraph&, DiffValue x) { return wsum(ad::matmul_const(x, m), 19); }, g.tensor({3, 4}, -1, 1)});
    const Tensor fb = dsp::mel_filterbank(32, 6, 20.0, 8000.0);
    cs.push_back({"mel_project", [fb](DiffGraph&, DiffValue x) { return wsum(ad::mel_project(x, fb), 20); },
                  g.tensor({3, 17}, 0, 1)});
  }
  cs.push_back({"frame", [](DiffGraph&, DiffValue x) { return wsum(ad::frame(x, 8, 3), 21); }, g.tensor({20}, -1, 1)});
  {
    const std::vector<double> w16 = dsp::hann_window(16), w12 = dsp::hann_window(12);
    cs.push_back({"dft_magnitude_fft", [w16](DiffGraph&, DiffValue x) { return wsum(ad::dft_magnitude(x, w16), 22); },
                  g.tensor({3, 16}, -1, 1)});
    cs.push_back({"dft_magnitude_direct", [w12](DiffGraph&, DiffValue x) { return wsum(ad::dft_magnitude(x, w12), 23); },
                  g.tensor({3, 12}, -1, 1)});
  }
  cs.push_back({"sum", [](DiffGraph&, DiffValue x) { return ad::sum(ad::mul(x, x)); }, g.tensor({4, 2}, -1, 1)});
  {
    const Tensor target = g.tensor({10}, -1, 1);
    cs.push_back({"l1_distance", [target](DiffGraph& gr, DiffValue x) { return ad::l1_distance(x, gr.constant(target)); },
                  g.tensor({10}, -1, 1)});
  }
  cs.push_back({"softmax_rows", [](DiffGraph&, DiffValue x) { return wsum(ad::softmax_rows(x), 24); }, g.tensor({3, 5}, -2, 2)});
  cs.push_back({"layer_norm_rows", [](DiffGraph&, DiffValue x) { return wsum(ad::layer_norm_rows(x), 25); }, g.tensor({3, 6}, -2, 2)});
  cs.push_back({"concat_cols", [](DiffGraph& gr, DiffValue x) {
                  const DiffValue parts[] = {x, gr.constant(Tensor({4, 2}, 0.5)), ad::scale(x, 2.0)};
                  return wsum(ad::concat_cols(parts), 26);
                },
                g.tensor({4, 3}, -1, 1)});
  cs.push_back({"slice_cols", [](DiffGraph&, DiffValue x) { return wsum(ad::slice_cols(x, 1, 4), 27); }, g.tensor({3, 5}, -1, 1)});
  cs.push_back({"scale_rows", [](DiffGraph&, DiffValue x) { return wsum(ad::scale_rows(ad::slice_cols(x, 0, 3), col(x, 3)), 28); },
                g.tensor({4, 4}, -1, 1)});
  {
    // two harmonics at 310-500 Hz stay far from Nyquist
    const Tensor amps = g.tensor({6, 2}, 0.1, 1.0);
    const Tensor f0 = g.tensor({6}, 310, 500);
    const ad::HarmonicBankConfig hb{400, 64, 64, 16000.0};
    cs.push_back({"harmonic_bank_f0", [amps, hb](DiffGraph& gr, DiffValue x) { return wsum(ad::harmonic_bank(x, gr.constant(amps), hb), 29); }, f0});
    cs.push_back({"harmonic_bank_amps", [f0, hb](DiffGraph& gr, DiffValue x) { return wsum(ad::harmonic_bank(gr.constant(f0), x, hb), 29); }, amps});
  }
  {
    auto exc = std::make_shared<const ad::NoiseExcitation>(ad::NoiseExcitation::generate(5, 32, 32, 99));
    cs.push_back({"filtered_noise", [exc](DiffGraph&, DiffValue x) { return wsum(ad::filtered_noise(x, exc, 160), 30); },
                  g.tensor({5, 8}, -1, 1)});
  }
  {
    const Tensor sig = g.tensor({40}, -1, 1), ir = g.tensor({9}, -0.5, 0.5);
    cs.push_back({"reverb_x", [ir](DiffGraph& gr, DiffValue x) { return wsum(ad::reverb(x, gr.constant(ir)), 31); }, sig});
    cs.push_back({"reverb_ir", [sig](DiffGraph& gr, DiffValue x) { return wsum(ad::reverb(gr.constant(sig), x), 31); }, ir});
  }
  return cs;
}

namespace {

struct DecodeFixture {
  nets::SynthModel model = nets::SynthModel::initialize(small_config(), 5);
  std::size_t T = 6;
  Tensor f0, z, loudness;
  DecodeFixture() {
    Gen g(77);
    f0 = g.tensor({T}, 100, 900);
    z = g.tensor({T, model.config.latent_dim}, -1.5, 1.5);
    loudness = g.tensor({T}, -9, -2);
  }
};

DiffValue controls_sum(const synth::DiffControls& c) {
  return ad::add(ad::add(wsum(c.amplitude, 40), wsum(c.distribution, 41)), wsum(ad::scale(c.noise, 1e4), 42));
}

}  // namespace

std::vector<GradCase> decode_cases() {
  auto fx = std::make_shared<DecodeFixture>();
  std::vector<GradCase> cs;
  cs.push_back({"decode_f0", [fx](DiffGraph& g, DiffValue x) {
                  const nets::BoundModel b = nets::bind(g, fx->model, false);
                  return controls_sum(nets::decode(b, x, g.constant(fx->z), g.constant(fx->loudness)));
                },
                fx->f0});
  cs.push_back({"decode_z", [fx](DiffGraph& g, DiffValue x) {
                  const nets::BoundModel b = nets::bind(g, fx->model, false);
                  return controls_sum(nets::decode(b, g.constant(fx->f0), x, g.constant(fx->loudness)));
                },
                fx->z});
  cs.push_back({"decode_loudness", [fx](DiffGraph& g, DiffValue x) {
                  const nets::BoundModel b = nets::bind(g, fx->model, false);
                  return controls_sum(nets::decode(b, g.constant(fx->f0), g.constant(fx->z), x));
                },
                fx->loudness});
  return cs;
}

namespace {

struct SynthFixture {
  synth::SynthConfig cfg{16000.0, 64, 4, 9};
  std::size_t T = 6;
  std::size_t N = 6 * 64;
  Tensor f0, amp, dist, noise;
  std::shared_ptr<const ad::NoiseExcitation> exc;
  SynthFixture() {
    Gen g(91);
    f0 = g.tensor({T}, 200, 400);
    amp = g.tensor({T, 1}, 0.2, 1.0);
    dist = g.tensor({T, cfg.n_harmonics}, 0.05, 0.5);
    noise = g.tensor({T, cfg.n_noise_bands}, 0.0, 0.2);
    exc = synth::make_excitation(T, 3, cfg);
  }
  DiffValue run(DiffGraph& g, DiffValue f, DiffValue a, DiffValue d, DiffValue n) const {
    return wsum(synth::synthesize(f, {a, d, n}, DiffValue{}, exc, N, cfg), 50);
  }
};

}  // namespace

std::vector<GradCase> synth_cases() {
  auto fx = std::make_shared<SynthFixture>();
  std::vector<GradCase> cs;
  cs.push_back({"synthesize_f0", [fx](DiffGraph& g, DiffValue x) {
                  return fx->run(g, x, g.constant(fx->amp), g.constant(fx->dist), g.constant(fx->noise));
                },
                fx->f0});
  cs.push_back({"synthesize_amplitude", [fx](DiffGraph& g, DiffValue x) {
                  return fx->run(g, g.constant(fx->f0), x, g.constant(fx->dist), g.constant(fx->noise));
                },
                fx->amp});
  cs.push_back({"synthesize_distribution", [fx](DiffGraph& g, DiffValue x) {
                  return fx->run(g, g.constant(fx->f0), g.constant(fx->amp), x, g.constant(fx->noise));
                },
                fx->dist});
  cs.push_back({"synthesize_noise", [fx](DiffGraph& g, DiffValue x) {
                  return fx->run(g, g.constant(fx->f0), g.constant(fx->amp), g.constant(fx->dist), x);
                },
                fx->noise});
  return cs;
}

namespace {

struct MixtureFixture {
  nets::SynthModel model;
  mixture::MixtureState state;
  dsp::AudioBuffer observed;
  dsp::StftConfig loss;
  mixture::Excitations exc;

  MixtureFixture() {
    model = nets::SynthModel::initialize(small_config(8, 9, 4, 16, 2), 21);
    const std::size_t T = 20, hop = model.config.hop();
    Gen g(5150);
    state.models = {&model, &model};
    state.n_samples = T * hop;
    state.seed = 4;
    for (std::size_t r = 0; r < 2; ++r) {
      nets::SynthParams p;
      p.f0 = g.uniform_vec(T, r == 0 ? 300 : 150, r == 0 ? 420 : 220);
      p.z = g.tensor({T, model.config.latent_dim}, -1, 1);
      p.loudness = g.uniform_vec(T, -6, -3);
      state.sources.push_back(p);
    }
    // A silent observation keeps |Y| - |Y^| one-signed in every bin, so the
    // L1 terms have no kink within a finite-difference step of the point.
    observed.samples.assign(state.n_samples, 0.0);
    loss.frame_ms = {16.0, 64.0};
    exc = mixture::make_excitations(state);
  }

  DiffValue run(DiffGraph& g, std::size_t source, int field, DiffValue x) const {
    std::vector<mixture::SourceInputs> in;
    for (std::size_t r = 0; r < state.size(); ++r) {
      const nets::SynthParams& p = state.sources[r];
      mixture::SourceInputs s{g.constant(Tensor::vector(p.f0)), g.constant(p.z), g.constant(Tensor::vector(p.loudness))};
      if (r == source) (field == 0 ? s.f0 : field == 1 ? s.z : s.loudness) = x;
      in.push_back(s);
    }
    return mixture::SpectralLoss(observed, loss)(mixture::render_mixture(g, state, in, exc).mixture);
  }
};

}  // namespace

std::vector<GradCase> mixture_cases() {
  auto fx = std::make_shared<MixtureFixture>();
  std::vector<GradCase> cs;
  const char* names[] = {"f0", "z", "loudness"};
  for (std::size_t r = 0; r < 2; ++r) {
    const nets::SynthParams& p = fx->state.sources[r];
    const Tensor points[] = {Tensor::vector(p.f0), p.z, Tensor::vector(p.loudness)};
    for (int f = 0; f < 3; ++f)
      cs.push_back({"mixture_loss_src" + std::to_string(r) + "_" + names[f],
                    [fx, r, f](DiffGraph& g, DiffValue x) { return fx->run(g, r, f, x); }, points[f]});
  }
  return cs;
}

}  // namespace testing
