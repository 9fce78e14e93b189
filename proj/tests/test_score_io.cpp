#include <catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "mixsynth/blob.hpp"
#include "mixsynth/error.hpp"
#include "mixsynth/io.hpp"
#include "mixsynth/metrics.hpp"
#include "mixsynth/mixture.hpp"
#include "mixsynth/score.hpp"
#include "mixsynth/synthetic.hpp"
#include "support.hpp"

using namespace mixsynth;
using Catch::Approx;

namespace {

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

score::ScoreTrack track(std::vector<score::NoteEvent> events) { return {0, std::move(events)}; }

// hand-written RIFF header for format cases write_wav never produces
void write_raw_wav(const std::filesystem::path& path, std::uint32_t rate, std::uint16_t channels, std::uint16_t bits,
                   std::uint16_t format) {
  std::ofstream f(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
  const std::uint32_t data_bytes = 16u * channels * bits / 8u;
  f.write("RIFF", 4);
  u32(36 + data_bytes);
  f.write("WAVEfmt ", 8);
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8u);
  u16(static_cast<std::uint16_t>(channels * bits / 8u));
  u16(bits);
  f.write("data", 4);
  u32(data_bytes);
  const std::vector<char> zeros(data_bytes, 0);
  f.write(zeros.data(), static_cast<std::streamsize>(zeros.size()));
}

}  // namespace

TEST_CASE("midi to Hz", "[score]") {
  CHECK(score::midi_to_hz(69) == 440.0);
  CHECK(score::midi_to_hz(57) == 220.0);
  CHECK(score::midi_to_hz(81) == 880.0);
}

TEST_CASE("rasterize", "[score]") {
  const auto all = score::rasterize(track({{0.0, 12.0, 69}}), 375, 32.0);
  CHECK(std::all_of(all.begin(), all.end(), [](int p) { return p == 69; }));
  const auto none = score::rasterize(track({}), 375, 32.0);
  CHECK(std::all_of(none.begin(), none.end(), [](int p) { return p == score::kSilence; }));
  // frame t is centred at (t + 1) * 32 ms
  const auto mid = score::rasterize(track({{0.352, 0.672, 60}}), 40, 32.0);
  for (std::size_t t = 0; t < 40; ++t) CHECK(mid[t] == (t >= 10 && t <= 19 ? 60 : score::kSilence));
}

TEST_CASE("overlapping or inverted events are rejected", "[score]") {
  CHECK_THROWS_AS(score::rasterize(track({{0.0, 1.0, 60}, {0.5, 1.5, 62}}), 10, 32.0), ValidationError);
  CHECK_THROWS_AS(score::rasterize(track({{1.0, 1.0, 60}}), 10, 32.0), ValidationError);
  CHECK_THROWS_AS(score::rasterize(track({{0.0, 1.0, 128}}), 10, 32.0), ValidationError);
  CHECK_NOTHROW(score::rasterize(track({{0.0, 1.0, 60}, {1.0, 2.0, 62}}), 10, 32.0));
}

TEST_CASE("init_f0 and the silence pitch", "[score]") {
  const auto f = score::init_f0({69, score::kSilence, 81});
  CHECK(f[0] == 440.0);
  CHECK(f[1] == Approx(622.2539674).epsilon(1e-9));
  CHECK(f[2] == Approx(880.0).epsilon(1e-15));
  CHECK(score::init_f0({57})[0] == 220.0);
  CHECK_THROWS_AS(score::init_f0({score::kSilence, score::kSilence}), ValidationError);
}

TEST_CASE("init_loudness", "[score]") {
  CHECK(score::init_loudness({69, score::kSilence}) == std::vector<double>{-6.0, -10.0});
  CHECK(score::init_loudness({60, 61, 62}) == std::vector<double>{-6.0, -6.0, -6.0});
  CHECK(score::init_loudness({60, -1}, -2.0, -3.0) == std::vector<double>{-2.0, -3.0});
  CHECK_THROWS_AS(score::init_loudness({60}, -10.0, -6.0), ValidationError);
}

TEST_CASE("score json round trip and errors", "[score]") {
  score::Score s;
  s.tracks = {{0, {{0.0, 0.5, 60}, {0.75, 1.25, 64}}}, {1, {}}, {2, {{0.1, 0.2, 40}}}};
  const std::string text = score::score_to_json(s);
  const score::Score back = score::score_from_json(text);
  REQUIRE(back.tracks.size() == 3);
  CHECK(back.tracks[0].events.size() == 2);
  CHECK(back.tracks[0].events[1].note == 64);
  CHECK(back.tracks[2].events[0].onset == 0.1);
  CHECK(score::score_to_json(back) == text);
  CHECK(score::score_from_json(text, 5).tracks.size() == 5);
  CHECK_THROWS_AS(score::score_from_json("[1, 2"), SchemaError);
  CHECK_THROWS_AS(score::score_from_json(R"({"version":"mixsynth-score/1","events":[{"source":0}]})"), SchemaError);
}

TEST_CASE("wav float32 round trip is bitwise and pcm16 within one step", "[io]") {
  testing::Gen g(1);
  dsp::AudioBuffer x{g.uniform_vec(1000, -0.9, 0.9)};
  for (double& v : x.samples) v = static_cast<double>(static_cast<float>(v));
  const auto path = temp_file("mixsynth_test.wav");
  io::write_wav(path, x);
  CHECK(testing::bitwise_equal(io::read_wav(path).samples, x.samples));
  io::write_wav(path, x, io::WavFormat::pcm16);
  CHECK(testing::max_abs_diff(io::read_wav(path).samples, x.samples) <= 1.0 / 32767.0);
  std::filesystem::remove(path);
}

TEST_CASE("wav rejects other rates and channel counts", "[io]") {
  const auto path = temp_file("mixsynth_bad.wav");
  write_raw_wav(path, 44100, 1, 16, 1);
  try {
    (void)io::read_wav(path);
    FAIL("accepted 44.1 kHz");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("expected 16000 Hz") != std::string::npos);
  }
  write_raw_wav(path, 16000, 2, 16, 1);
  try {
    (void)io::read_wav(path);
    FAIL("accepted stereo");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("2 channels") != std::string::npos);
  }
  write_raw_wav(path, 16000, 1, 8, 1);
  CHECK_THROWS_AS(io::read_wav(path), ValidationError);
  write_raw_wav(path, 16000, 1, 16, 1);
  CHECK(io::read_wav(path).size() == 16);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(io::read_wav(path), ValidationError);
}

TEST_CASE("param file write, read, write is byte identical", "[io]") {
  testing::Gen g(2);
  io::ParamFile pf;
  for (int r = 0; r < 2; ++r) pf.sources.push_back({g.uniform_vec(9, 50, 500), g.tensor({9, 4}, -2, 2), g.uniform_vec(9, -9, -1)});
  const std::string a = io::params_to_json(pf);
  const io::ParamFile back = io::params_from_json(a);
  CHECK(io::params_to_json(back) == a);
  CHECK(testing::bitwise_equal(back.sources[1].z.values(), pf.sources[1].z.values()));
  CHECK(back.frames() == 9);
  CHECK(back.latent_dim() == 4);
  const auto path = temp_file("mixsynth_params.json");
  io::save_params(pf, path);
  CHECK(io::read_text(path) == a);
  CHECK(io::params_to_json(io::load_params(path)) == a);
  std::filesystem::remove(path);
}

TEST_CASE("param file schema errors", "[io]") {
  io::ParamFile pf;
  pf.sources.push_back({{100.0, 100.0}, Tensor({2, 3}), {-5.0, -5.0}});
  std::string text = io::params_to_json(pf);
  CHECK_THROWS_AS(io::params_from_json(text.substr(0, 40)), SchemaError);
  std::string wrong = text;
  wrong.replace(wrong.find("\"frames\": 2"), 11, "\"frames\": 3");
  CHECK_THROWS_AS(io::params_from_json(wrong), SchemaError);
  pf.sources[0].loudness.pop_back();
  CHECK_THROWS_AS(pf.validate(), ValidationError);
}

TEST_CASE("base64 blobs", "[io]") {
  const std::vector<double> v = {0.0, -1.5, 1e-300, 3.25};
  const std::string s = io::encode_f64(v);
  CHECK(io::decode_f64(s, 4, "x") == v);
  CHECK_THROWS_AS(io::decode_f64(s, 3, "x"), SchemaError);
  CHECK_THROWS_AS(io::decode_f64("***", 1, "x"), SchemaError);
}

TEST_CASE("f0 MAE in cents", "[metrics]") {
  const std::vector<double> ref = {440, 220, 330};
  const metrics::Mask all(3, true);
  CHECK(metrics::f0_mae_cents(ref, ref, all) == 0.0);
  const std::vector<double> twice = {880, 440, 660};
  CHECK(metrics::f0_mae_cents(twice, ref, all) == Approx(1200.0).epsilon(1e-12));
  CHECK(metrics::f0_mae_cents(std::vector<double>{440}, std::vector<double>{441}, metrics::Mask{true}) ==
        Approx(3.9302).margin(1e-4));
  const std::vector<double> partly = {440, 0.0, 330};
  CHECK(metrics::f0_mae_cents(partly, ref, {true, false, true}) == 0.0);
  CHECK(std::isfinite(metrics::f0_mae_cents(partly, ref, all)));
  CHECK_THROWS_AS(metrics::f0_mae_cents(ref, ref, metrics::Mask(3, false)), ValidationError);
}

TEST_CASE("MFCC and loudness MAE", "[metrics]") {
  testing::Gen g(3);
  const dsp::AudioBuffer x{g.normal_vec(8000, 0.1)};
  dsp::AudioBuffer flipped = x, doubled = x;
  for (double& v : flipped.samples) v = -v;
  for (double& v : doubled.samples) v *= 2.0;
  const dsp::AudioBuffer silence{std::vector<double>(8000, 0.0)};
  CHECK(metrics::mfcc_mae(x, x) == 0.0);
  CHECK(metrics::mfcc_mae(flipped, x) == 0.0);
  CHECK(metrics::mfcc_mae(x, silence) > 0.0);
  CHECK(metrics::loudness_mae(x, x) == 0.0);
  CHECK(metrics::loudness_mae(doubled, x) == Approx(6.0206).margin(1e-4));
  CHECK(metrics::loudness_mae(silence, silence) == 0.0);
}

TEST_CASE("activity masks", "[metrics]") {
  CHECK(metrics::mask_from_roll({60, -1, 0}) == metrics::Mask{true, false, true});
  CHECK(metrics::mask_from_loudness(std::vector<double>{-10.0, -8.9, -9.0}) == metrics::Mask{false, true, false});
}

TEST_CASE("gen scenario: 12 s, deterministic, stems sum to the mixture", "[io]") {
  nets::ModelConfig mc = testing::small_config(8, 9, 4, 16, 1);
  const auto model = nets::SynthModel::initialize(mc, 1);
  synthetic::ScenarioConfig sc;
  sc.seed = 3;
  const auto a = synthetic::generate(sc, model);
  CHECK(a.mixture.size() == 192000);
  CHECK(a.truth.frames() == 375);
  CHECK(a.truth.sources.size() == 2);
  CHECK(testing::bitwise_equal(mixture::mix_stems(a.stems).samples, a.mixture.samples));
  const auto b = synthetic::generate(sc, model);
  CHECK(testing::bitwise_equal(a.mixture.samples, b.mixture.samples));
  CHECK(io::params_to_json(a.truth) == io::params_to_json(b.truth));
  CHECK(score::score_to_json(a.score) == score::score_to_json(b.score));
}

TEST_CASE("gen rejects infeasible scenarios", "[io]") {
  const nets::ModelConfig mc = testing::small_config();
  synthetic::ScenarioConfig sc;
  sc.note_ranges = {{130, 131}};
  CHECK_THROWS_AS(sc.validate(mc), ValidationError);
  sc = {};
  sc.note_ranges = {{60, 50}};
  CHECK_THROWS_AS(sc.validate(mc), ValidationError);
  sc = {};
  sc.duration_s = 1.0;
  CHECK_THROWS_AS(sc.validate(mc), ValidationError);
  sc = {};
  sc.n_sources = 0;
  CHECK_THROWS_AS(sc.validate(mc), ValidationError);
}

TEST_CASE("evaluation of the ground truth against itself is all zero", "[metrics]") {
  nets::ModelConfig mc = testing::small_config(8, 9, 4, 16, 1);
  const auto model = nets::SynthModel::initialize(mc, 1);
  synthetic::ScenarioConfig sc;
  sc.duration_s = 2.016;
  const auto s = synthetic::generate(sc, model);
  std::vector<metrics::Mask> masks;
  for (const auto& p : s.truth.sources) masks.push_back(metrics::mask_from_loudness(p.loudness));
  for (bool by_index : {true, false}) {
    const metrics::EvalBlock b = metrics::evaluate(s.truth, s.stems, s.truth, s.stems, masks, by_index);
    REQUIRE(b.rows.size() == 2);
    for (const auto& r : b.rows) {
      CHECK(r.source == r.reference);
      CHECK(r.f0_cents == 0.0);
      CHECK(r.mfcc == 0.0);
      CHECK(r.loudness_db == 0.0);
    }
    CHECK(b.mean.f0_cents == 0.0);
  }
  // swapped estimate is put back in order without a score
  io::ParamFile swapped = s.truth;
  std::swap(swapped.sources[0], swapped.sources[1]);
  const std::vector<dsp::AudioBuffer> swapped_stems = {s.stems[1], s.stems[0]};
  const auto b = metrics::evaluate(swapped, swapped_stems, s.truth, s.stems, masks, false);
  CHECK(b.rows[0].source == 1);
  CHECK(b.rows[0].reference == 0);
  CHECK(b.mean.f0_cents == 0.0);
  metrics::EvalReport report{b, b, false};
  const std::string json = metrics::report_to_json(report);
  CHECK(json.find("reference_vs_itself") != std::string::npos);
  CHECK(metrics::report_to_table(report).find("F0 [cent]") != std::string::npos);
}
