// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//   acceptance --cli path/to/mixsynth [--only 1,2,6] [--work-dir dir]
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "grad_cases.hpp"
#include "mixsynth/blob.hpp"
#include "mixsynth/metrics.hpp"
#include "mixsynth/mixture.hpp"
#include "mixsynth/optim.hpp"
#include "mixsynth/pipeline.hpp"
#include "mixsynth/synthetic.hpp"
#include "support.hpp"

using namespace mixsynth;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1: gradient suite ----
Outcome gradients() {
  const auto t0 = Clock::now();
  std::vector<testing::GradCase> cases = testing::primitive_cases();
  for (auto* group : {&testing::decode_cases, &testing::synth_cases, &testing::mixture_cases})
    for (auto& c : (*group)()) cases.push_back(std::move(c));
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    const double e = ad::grad_check(c.builder, c.point);
    if (!(e <= worst)) {
      worst = e;
      worst_name = c.name;
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 120.0, std::to_string(cases.size()) + " cases, max rel err " + fmt("%.2e", worst) +
                                               " (" + worst_name + "), " + fmt("%.1f", elapsed) + " s"};
}

// ---- 2: harmonic oracle ----
Outcome harmonic_oracle() {
  const std::size_t T = 32, N = T * 512, K = 4;
  const std::vector<double> dist = {0.4, 0.3, 0.2, 0.1};
  const synth::SynthConfig cfg{16000.0, 512, K, 9};
  double worst = 0.0;
  for (double f0 : {110.0, 440.0, 3000.0}) {
    synth::ControlSignals c;
    c.amplitude.assign(T, 0.8);
    c.harmonic_distribution = Tensor({T, K});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < K; ++k) c.harmonic_distribution.at(t, k) = dist[k];
    c.noise_magnitudes = Tensor({T, 9}, 0.0);
    const auto y = synth::harmonic_synth(std::vector<double>(T, f0), c, N, cfg);
    std::vector<double> ref(N, 0.0);
    for (std::size_t k = 1; k <= K; ++k) {
      if (static_cast<double>(k) * f0 >= 8000.0) continue;
      for (std::size_t n = 0; n < N; ++n)
        ref[n] += 0.8 * dist[k - 1] * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) * f0 * static_cast<double>(n) / 16000.0);
    }
    worst = std::max(worst, testing::rms_diff(y.samples, ref));
  }
  return {worst < 1e-9, "max RMS error " + fmt("%.2e", worst) + " over 110/440/3000 Hz, K=4"};
}

// ---- 3: loss identities ----
Outcome loss_identities() {
  testing::Gen g(3);
  const dsp::StftConfig six = dsp::StftConfig::six_scale();
  double self = 0.0;
  bool symmetric = true;
  for (int i = 0; i < 5; ++i) {
    const dsp::AudioBuffer x{g.normal_vec(g.index(4096, 16000), g.uniform(0.01, 1.0))};
    const dsp::AudioBuffer y{g.normal_vec(x.size(), 0.3)};
    self = std::max(self, mixture::spectral_loss(x, x, six));
    symmetric = symmetric && mixture::spectral_loss(x, y, six) == mixture::spectral_loss(y, x, six);
  }
  const bool windows = six.frame_ms == std::vector<double>{8, 16, 32, 64, 128, 256} && six.hop_fraction == 0.5;
  return {self <= 1e-9 && symmetric && windows, "max L(x,x) " + fmt("%.1e", self) + (symmetric ? ", symmetric" : ", NOT symmetric") +
                                                    (windows ? ", windows 8..256 ms at half hop" : ", wrong windows")};
}

// ---- 4: additivity ----
Outcome additivity() {
  const nets::ModelConfig cfg = testing::small_config();
  const auto model = nets::SynthModel::initialize(cfg, 4);
  testing::Gen g(4);
  bool ok = true;
  for (std::size_t R = 1; R <= 3; ++R) {
    mixture::MixtureState s;
    s.seed = R;
    s.n_samples = 20 * cfg.hop();
    for (std::size_t r = 0; r < R; ++r) {
      s.sources.push_back({g.uniform_vec(20, 100, 800), g.tensor({20, cfg.latent_dim}, -1, 1), g.uniform_vec(20, -6, -2)});
      s.models.push_back(&model);
    }
    const auto out = mixture::synthesize_mixture(s);
    std::vector<double> sum(s.n_samples, 0.0);
    for (const auto& st : out.stems)
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += st.samples[i];
    ok = ok && testing::bitwise_equal(out.mixture.samples, sum);
  }
  return {ok, ok ? "bitwise equal for R = 1, 2, 3" : "mixture differs from the ordered stem sum"};
}

// ---- 5: score init ----
Outcome score_init() {
  const bool a4 = score::midi_to_hz(69) == 440.0;
  score::Score s;
  s.tracks = {{0, {{0.0, 1.0, 60}, {1.5, 2.5, 67}}}};
  score::Score up = s;
  for (auto& e : up.tracks[0].events) e.note += 12;
  const nets::ModelConfig mc = testing::small_config();
  const auto a = pipeline::score_init(s, 1, 90, mc, score::kDefaultHighLoudness, score::kDefaultLowLoudness, 0);
  const auto b = pipeline::score_init(up, 1, 90, mc, score::kDefaultHighLoudness, score::kDefaultLowLoudness, 0);
  const auto roll = score::rasterize(s.tracks[0], 90, 32.0);
  bool octave = true, levels = true;
  bool saw_high = false, saw_low = false;
  for (std::size_t t = 0; t < roll.size(); ++t) {
    if (roll[t] >= 0) octave = octave && std::abs(b[0].f0[t] - 2.0 * a[0].f0[t]) <= 1e-12 * a[0].f0[t];
    const double l = a[0].loudness[t];
    levels = levels && l == (roll[t] >= 0 ? -6.0 : -10.0);
    saw_high = saw_high || l == -6.0;
    saw_low = saw_low || l == -10.0;
  }
  const bool ok = a4 && octave && levels && saw_high && saw_low;
  return {ok, std::string(a4 ? "69 -> 440 Hz" : "69 != 440 Hz") + (octave ? ", +12 doubles f0" : ", octave broken") +
                  (levels && saw_high && saw_low ? ", loudness -6 / -10" : ", wrong loudness defaults")};
}

// ---- shared scenario for 6 and 7 ----
nets::ModelConfig reduced_config() {
  nets::ModelConfig c;
  c.n_harmonics = 16;
  c.n_noise_bands = 33;
  return c;
}

optim::FitConfig recovery_fit_config() {
  optim::FitConfig c;
  c.iterations = 3000;
  c.schedule = optim::LearningRateSchedule::fitting();
  c.loss.frame_ms = {32, 128, 256};
  c.seed = 0;  // the scenario's noise seed
  return c;
}

struct Recovery {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> f0_cents;  // per source, active frames
  std::vector<double> loudness_db;
  double seconds = 0.0;
  double mean_f0() const { return std::accumulate(f0_cents.begin(), f0_cents.end(), 0.0) / static_cast<double>(f0_cents.size()); }
};

Recovery recover(const synthetic::Scenario& sc, const nets::SynthModel& model, const std::vector<nets::SynthParams>& init) {
  const auto t0 = Clock::now();
  const std::vector<const nets::SynthModel*> models(init.size(), &model);
  const optim::FitConfig cfg = recovery_fit_config();
  const optim::FitResult res = optim::fit_mixture(sc.mixture, models, init, cfg);
  Recovery r;
  r.initial_loss = res.loss_trace.front();
  r.final_loss = res.diverged ? INFINITY : res.loss_trace.back();
  mixture::MixtureState st{res.params, models, cfg.seed, sc.mixture.size(), {}};
  const auto est = mixture::synthesize_mixture(st);
  io::ParamFile est_file = sc.truth;
  est_file.sources = res.params;
  std::vector<metrics::Mask> masks;
  for (std::size_t s = 0; s < init.size(); ++s)
    masks.push_back(metrics::mask_from_roll(score::rasterize(sc.score.tracks.at(s), sc.truth.frames(), 32.0)));
  const metrics::EvalBlock b = metrics::evaluate(est_file, est.stems, sc.truth, sc.stems, masks, true);
  for (const auto& row : b.rows) {
    r.f0_cents.push_back(row.f0_cents);
    r.loudness_db.push_back(row.loudness_db);
  }
  r.seconds = seconds_since(t0);
  return r;
}

struct Context {
  fs::path cli;
  fs::path work;
  std::optional<optim::PretrainResult> pretrained;
  std::optional<Recovery> score_seed0;
};

const optim::PretrainResult& pretrained_model(Context& ctx) {
  if (!ctx.pretrained) {
    const nets::ModelConfig mc = reduced_config();
    const auto clips = synthetic::training_clips(10, 2.048, 7, mc);
    optim::PretrainConfig pc;
    pc.epochs = 200;
    pc.learning_rate = 1e-3;
    ctx.pretrained = optim::pretrain(clips, nets::SynthModel::initialize(mc, 0), pc);
  }
  return *ctx.pretrained;
}

synthetic::Scenario recovery_scenario(Context& ctx) {
  synthetic::ScenarioConfig sc;  // 2 sources, 12 s, seed 0
  return synthetic::generate(sc, pretrained_model(ctx).model);
}

// ---- 6: self-consistency recovery ----
Outcome self_recovery(Context& ctx) {
  const auto& model = pretrained_model(ctx).model;
  const synthetic::Scenario sc = recovery_scenario(ctx);
  const auto init = pipeline::score_init(sc.score, 2, sc.truth.frames(), model.config, score::kDefaultHighLoudness,
                                         score::kDefaultLowLoudness, 0);
  const Recovery r = recover(sc, model, init);
  ctx.score_seed0 = r;
  const double ratio = r.final_loss / r.initial_loss;
  const double f0 = *std::max_element(r.f0_cents.begin(), r.f0_cents.end());
  const double loud = *std::max_element(r.loudness_db.begin(), r.loudness_db.end());
  const bool ok = ratio <= 0.05 && f0 <= 30.0 && loud <= 3.0;
  return {ok, "final/initial loss " + fmt("%.4f", ratio) + " (<= 0.05), worst-source F0 MAE " + fmt("%.2f", f0) +
                  " cents (<= 30), worst-source loudness MAE " + fmt("%.2f", loud) + " dB (<= 3), fit " +
                  fmt("%.0f", r.seconds) + " s"};
}

// ---- 7: score init vs random-pitch init over 5 seeds ----
double stddev(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

Outcome score_vs_random(Context& ctx) {
  const auto& model = pretrained_model(ctx).model;
  const synthetic::Scenario sc = recovery_scenario(ctx);
  const std::size_t T = sc.truth.frames();
  std::vector<double> with_score, with_random;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    if (seed == 0 && ctx.score_seed0) {
      with_score.push_back(ctx.score_seed0->mean_f0());
    } else {
      const auto init = pipeline::score_init(sc.score, 2, T, model.config, score::kDefaultHighLoudness,
                                             score::kDefaultLowLoudness, seed);
      with_score.push_back(recover(sc, model, init).mean_f0());
    }
    // one random MIDI pitch per source over the scenario's combined range
    std::mt19937_64 rng(1000 + seed);
    std::uniform_real_distribution<double> note(48.0, 79.0);
    const std::vector<double> pitches = {score::midi_to_hz(note(rng)), score::midi_to_hz(note(rng))};
    const auto init = pipeline::flat_init(pitches, 2, T, model.config, score::kDefaultHighLoudness, seed);
    with_random.push_back(recover(sc, model, init).mean_f0());
  }
  const double ss = stddev(with_score), sr = stddev(with_random);
  std::ostringstream d;
  d << "std of F0 MAE: score " << fmt("%.2f", ss) << " cents, random " << fmt("%.2f", sr) << " cents; means "
    << fmt("%.1f", std::accumulate(with_score.begin(), with_score.end(), 0.0) / 5.0) << " / "
    << fmt("%.1f", std::accumulate(with_random.begin(), with_random.end(), 0.0) / 5.0);
  return {ss <= sr, d.str()};
}

// ---- 8: pretraining smoke test ----
Outcome pretraining(Context& ctx) {
  const auto t0 = Clock::now();
  const optim::PretrainResult& r = pretrained_model(ctx);
  const double first = r.epoch_loss.front(), last = r.epoch_loss.back();
  const fs::path path = ctx.work / "pretrained.json";
  nets::save_model(r.model, path);
  const nets::SynthModel back = nets::load_model(path);
  bool same = nets::model_to_json(back) == io::read_text(path);
  const auto a = r.model.parameters(), b = back.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) same = same && testing::bitwise_equal(a[i]->values(), b[i]->values());
  return {last < 0.5 * first && same, "epoch loss " + fmt("%.4g", first) + " -> " + fmt("%.4g", last) + " (ratio " +
                                         fmt("%.3f", last / first) + " < 0.5), " +
                                         (same ? "round trip bit exact" : "round trip differs") + ", " +
                                         fmt("%.0f", seconds_since(t0)) + " s"};
}

// ---- 9: CLI pipeline ----
Outcome cli_pipeline(Context& ctx) {
  if (ctx.cli.empty()) return {false, "no --cli path given"};
  const fs::path d = ctx.work / "e2e";
  fs::remove_all(d);
  const std::string cli = ctx.cli.string(), dir = d.string();
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"gen", "gen --out-dir " + dir + " --sources 2 --duration 3.008 --harmonics 8 --noise-bands 9 --latent-dim 4 "
              "--hidden 32 --layers 2 --clips 3 --clip-seconds 1.024"},
      {"train", "train --data " + dir + "/clips --model " + dir + "/model.json --out " + dir + "/trained.json --epochs 3 "
                "--scales 16,64"},
      {"fit", "fit --mixture " + dir + "/mixture.wav --model " + dir + "/model.json --score " + dir + "/score.json --out " +
              dir + "/fit.json --trace " + dir + "/trace.csv --iterations 20 --scales 16,64"},
      {"synth", "synth --params " + dir + "/fit.json --model " + dir + "/model.json --out-dir " + dir + "/est"},
      {"eval", "eval --est " + dir + "/fit.json --ref " + dir + "/truth.json --ref-audio " + dir + "/stems --est-audio " +
               dir + "/est --score " + dir + "/score.json --out " + dir + "/report.json"}};
  for (const auto& [name, args] : steps) {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + dir + "_" + name + ".log\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, name + " exited with status " + std::to_string(rc)};
  }
  const auto report = nlohmann::json::parse(io::read_text(d / "report.json"));
  bool zeros = report.contains("reference_vs_itself");
  if (zeros) {
    const auto& self = report["reference_vs_itself"];
    for (const auto& row : self["sources"])
      for (const char* k : {"f0_cents", "mfcc", "loudness_db"}) zeros = zeros && row[k].get<double>() == 0.0;
    for (const char* k : {"f0_cents", "mfcc", "loudness_db"}) zeros = zeros && self["mean"][k].get<double>() == 0.0;
  }
  return {zeros, zeros ? "gen, train, fit, synth, eval exit 0; reference row all zero" : "reference row not all zero"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Context ctx;
  std::vector<int> only;
  ctx.work = fs::temp_directory_path() / "mixsynth_acceptance";
  app.add_option("--cli", ctx.cli, "mixsynth executable for the pipeline check");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--work-dir", ctx.work, "Scratch directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradients},
      {"harmonic oracle", harmonic_oracle},
      {"loss identities", loss_identities},
      {"mixture additivity", additivity},
      {"score init", score_init},
      {"self-consistency recovery", [&] { return self_recovery(ctx); }},
      {"score init steadies F0 across seeds", [&] { return score_vs_random(ctx); }},
      {"pretraining smoke test", [&] { return pretraining(ctx); }},
      {"end-to-end CLI", [&] { return cli_pipeline(ctx); }},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << " -- " << o.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
