// mixsynth: synthetic data, pretraining, mixture fitting, resynthesis and evaluation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mixsynth/blob.hpp"
#include "mixsynth/error.hpp"
#include "mixsynth/io.hpp"
#include "mixsynth/metrics.hpp"
#include "mixsynth/mixture.hpp"
#include "mixsynth/pipeline.hpp"
#include "mixsynth/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mixsynth;

namespace {

struct ModelFlags {
  std::size_t harmonics = 64;
  std::size_t noise_bands = 65;
  std::size_t latent = 16;
  std::size_t hidden = 256;
  std::size_t layers = 3;
  std::uint64_t init_seed = 0;

  void add(CLI::App* app) {
    app->add_option("--harmonics", harmonics, "Harmonics K of a new model")->capture_default_str();
    app->add_option("--noise-bands", noise_bands, "Noise bands M of a new model")->capture_default_str();
    app->add_option("--latent-dim", latent, "Latent width D of a new model")->capture_default_str();
    app->add_option("--hidden", hidden, "Decoder/encoder width of a new model")->capture_default_str();
    app->add_option("--layers", layers, "Decoder hidden layers of a new model")->capture_default_str();
    app->add_option("--init-seed", init_seed, "Weight seed of a new model")->capture_default_str();
  }
  nets::SynthModel create() const {
    nets::ModelConfig c;
    c.n_harmonics = harmonics;
    c.n_noise_bands = noise_bands;
    c.latent_dim = latent;
    c.decoder_hidden = hidden;
    c.encoder_hidden = hidden;
    c.decoder_layers = layers;
    return nets::SynthModel::initialize(c, init_seed);
  }
};

dsp::StftConfig scales_config(const std::vector<double>& scales) {
  dsp::StftConfig c = dsp::StftConfig::six_scale();
  if (!scales.empty()) c.frame_ms = scales;
  c.validate();
  return c;
}

void write_stems(const fs::path& dir, const std::vector<dsp::AudioBuffer>& stems) {
  fs::create_directories(dir);
  for (std::size_t r = 0; r < stems.size(); ++r) io::write_wav(dir / ("stem_" + std::to_string(r) + ".wav"), stems[r]);
}

std::vector<dsp::AudioBuffer> read_stems(const fs::path& dir, std::size_t n) {
  std::vector<dsp::AudioBuffer> out;
  for (std::size_t r = 0; r < n; ++r) out.push_back(io::read_wav(dir / ("stem_" + std::to_string(r) + ".wav")));
  return out;
}

mixture::MixtureOutput render(const io::ParamFile& params, const nets::SynthModel& model, std::uint64_t seed) {
  mixture::MixtureState st;
  st.sources = params.sources;
  st.models.assign(params.sources.size(), &model);
  st.seed = seed;
  st.n_samples = params.frames() * model.config.hop();
  return mixture::synthesize_mixture(st);
}

// ---- gen ----
struct GenCmd {
  fs::path out_dir;
  fs::path model_path;
  ModelFlags model;
  synthetic::ScenarioConfig scenario;
  std::size_t clips = 0;
  double clip_seconds = 1.024;

  void add(CLI::App& root) {
    CLI::App* c = root.add_subcommand("gen", "Generate a synthetic mixture with ground truth");
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->add_option("--model", model_path, "Model used to render sources (default: new random model, saved as model.json)");
    model.add(c);
    c->add_option("--sources", scenario.n_sources, "Number of sources R")->capture_default_str();
    c->add_option("--duration", scenario.duration_s, "Duration in seconds")->capture_default_str();
    c->add_option("--seed", scenario.seed, "Scenario and noise seed")->capture_default_str();
    c->add_option("--clips", clips, "Also write this many monophonic training clips")->capture_default_str();
    c->add_option("--clip-seconds", clip_seconds, "Training clip duration")->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    fs::create_directories(out_dir);
    nets::SynthModel m;
    if (model_path.empty()) {
      m = model.create();
      nets::save_model(m, out_dir / "model.json");
    } else {
      m = nets::load_model(model_path);
    }
    const synthetic::Scenario sc = synthetic::generate(scenario, m);
    io::write_wav(out_dir / "mixture.wav", sc.mixture);
    write_stems(out_dir / "stems", sc.stems);
    io::save_params(sc.truth, out_dir / "truth.json");
    score::save_score(sc.score, out_dir / "score.json");
    if (clips > 0) {
      const auto set = synthetic::training_clips(clips, clip_seconds, scenario.seed + 7, m.config);
      fs::create_directories(out_dir / "clips");
      io::ParamFile f0s;
      for (std::size_t i = 0; i < set.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "clip_%03zu.wav", i);
        io::write_wav(out_dir / "clips" / name, set[i].audio);
        f0s.sources.push_back({set[i].f0, Tensor({set[i].f0.size(), m.config.latent_dim}),
                               optim::model_loudness(set[i].audio, m.config)});
      }
      io::save_params(f0s, out_dir / "clips" / "f0.json");
    }
    std::cout << "wrote " << out_dir.string() << " (" << sc.stems.size() << " sources, " << sc.truth.frames()
              << " frames)\n";
  }
};

// ---- train ----
struct TrainCmd {
  fs::path data_dir;
  fs::path model_in;
  fs::path out;
  fs::path loss_csv;
  ModelFlags model;
  optim::PretrainConfig cfg;
  std::vector<double> scales;

  void add(CLI::App& root) {
    CLI::App* c = root.add_subcommand("train", "Pretrain a source model on monophonic clips");
    c->add_option("--data", data_dir, "Directory with clip_NNN.wav files and f0.json")->required();
    c->add_option("--model", model_in, "Starting model (default: new random model)");
    model.add(c);
    c->add_option("--out", out, "Trained model path")->required();
    c->add_option("--epochs", cfg.epochs, "Epochs")->capture_default_str();
    c->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
    c->add_option("--seed", cfg.seed, "Noise seed")->capture_default_str();
    c->add_option("--scales", scales, "Loss frame lengths in ms (default 8,16,32,64,128,256)")->delimiter(',');
    c->add_option("--loss-csv", loss_csv, "Write epoch,loss CSV here");
    c->callback([this] { run(); });
  }

  void run() {
    cfg.loss = scales_config(scales);
    nets::SynthModel m = model_in.empty() ? model.create() : nets::load_model(model_in);
    const io::ParamFile f0s = io::load_params(data_dir / "f0.json");
    std::vector<optim::TrainingClip> clips;
    for (std::size_t i = 0; i < f0s.sources.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "clip_%03zu.wav", i);
      clips.push_back({io::read_wav(data_dir / name), f0s.sources[i].f0});
    }
    cfg.progress = [this](std::size_t e, double loss) {
      if (e % 50 == 0 || e + 1 == cfg.epochs) std::cerr << "epoch " << e << " loss " << loss << "\n";
    };
    const optim::PretrainResult res = optim::pretrain(clips, std::move(m), cfg);
    nets::save_model(res.model, out);
    if (!loss_csv.empty()) {
      std::string csv = "epoch,loss\n";
      for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e, res.epoch_loss[e]);
        csv += buf;
      }
      io::write_text(loss_csv, csv);
    }
    if (!res.epoch_loss.empty())
      std::cout << "trained " << res.epoch_loss.size() << " epochs, loss " << res.epoch_loss.front() << " -> "
                << res.epoch_loss.back() << "\n";
  }
};

// ---- fit ----
struct FitCmd {
  fs::path mixture_path, score_path, out, trace, stems_dir, init_params;
  std::vector<fs::path> model_paths;
  std::size_t iterations = 3000;
  std::uint64_t seed = 0;
  double l_high = score::kDefaultHighLoudness;
  double l_low = score::kDefaultLowLoudness;
  std::vector<double> scales;
  std::vector<double> flat_pitch;
  std::vector<std::string> free_vars;
  std::size_t sources = 0;
  std::size_t jobs = 1;
  double segment_seconds = 0.0;
  bool verbose = false;

  void add(CLI::App& root) {
    CLI::App* c = root.add_subcommand("fit", "Fit per-source synthesis parameters to an observed mixture");
    c->add_option("--mixture", mixture_path, "Observed mixture WAV")->required();
    c->add_option("--model", model_paths, "Model file (once for a shared model, or once per source)")->required();
    c->add_option("--score", score_path, "Aligned score JSON for score-informed initialisation");
    c->add_option("--init-params", init_params, "Parameter file supplying initial f0 and loudness");
    c->add_option("--flat-pitch", flat_pitch, "Initial constant f0 in Hz (one value or one per source)")->delimiter(',');
    c->add_option("--sources", sources, "Number of sources (default: from score or init params)");
    c->add_option("--out", out, "Fitted parameter file")->required();
    c->add_option("--trace", trace, "Loss trace CSV");
    c->add_option("--stems-dir", stems_dir, "Write resynthesised stems and mixture here");
    c->add_option("--iterations", iterations, "Adam iterations")->capture_default_str();
    c->add_option("--seed", seed, "Seed for z initialisation and synthesis noise")->capture_default_str();
    c->add_option("--l-high", l_high, "Initial loudness of active frames (model units)")->capture_default_str();
    c->add_option("--l-low", l_low, "Initial loudness of silent frames (model units)")->capture_default_str();
    c->add_option("--scales", scales, "Loss frame lengths in ms (default 8,16,32,64,128,256)")->delimiter(',');
    c->add_option("--free", free_vars, "Optimised variables among f0,z,loudness (default all)")->delimiter(',');
    c->add_option("--jobs", jobs, "Threads for segment-parallel fitting")->capture_default_str();
    c->add_option("--segment-seconds", segment_seconds, "Fit independent segments of this length (0: whole signal)")
        ->capture_default_str();
    c->add_flag("--verbose", verbose, "Print the loss every 100 iterations");
    c->callback([this] { run(); });
  }

  void run() {
    const dsp::AudioBuffer observed = io::read_wav(mixture_path);
    std::vector<nets::SynthModel> models;
    for (const fs::path& p : model_paths) models.push_back(nets::load_model(p));
    const nets::ModelConfig& mc = models.front().config;
    const std::size_t hop = mc.hop();
    const std::size_t T = dsp::frame_count(observed.size(), hop);
    if (observed.size() != T * hop)
      throw ValidationError(mixture_path.string() + ": length " + std::to_string(observed.size()) +
                            " is not a whole number of " + std::to_string(hop) + "-sample frames");

    std::vector<nets::SynthParams> init;
    if (!score_path.empty()) {
      const score::Score sc = score::load_score(score_path, sources);
      const std::size_t R = std::max(sources, sc.tracks.size());
      init = pipeline::score_init(sc, R, T, mc, l_high, l_low, seed);
    } else if (!init_params.empty()) {
      const io::ParamFile f = io::load_params(init_params);
      if (f.frames() != T) throw ValidationError("init params have " + std::to_string(f.frames()) + " frames, mixture has " + std::to_string(T));
      for (std::size_t r = 0; r < f.sources.size(); ++r)
        init.push_back({f.sources[r].f0, pipeline::random_z(T, mc.latent_dim, seed + r), f.sources[r].loudness});
    } else if (!flat_pitch.empty()) {
      const std::size_t R = sources ? sources : flat_pitch.size();
      init = pipeline::flat_init(flat_pitch, R, T, mc, l_high, seed);
    } else {
      throw ValidationError("fit: pass --score, --init-params or --flat-pitch to initialise f0");
    }
    const std::size_t R = init.size();
    if (models.size() != 1 && models.size() != R)
      throw ValidationError("fit: give one model or one per source (" + std::to_string(R) + ")");
    std::vector<const nets::SynthModel*> ptrs;
    for (std::size_t r = 0; r < R; ++r) ptrs.push_back(&models[models.size() == 1 ? 0 : r]);

    optim::FitConfig cfg;
    cfg.iterations = iterations;
    cfg.loss = scales_config(scales);
    cfg.seed = seed;
    if (!free_vars.empty()) {
      cfg.free = {false, false, false};
      for (const std::string& v : free_vars) {
        if (v == "f0") cfg.free.f0 = true;
        else if (v == "z") cfg.free.z = true;
        else if (v == "loudness") cfg.free.loudness = true;
        else throw ValidationError("--free: unknown variable '" + v + "' (use f0, z, loudness)");
      }
    }
    if (verbose)
      cfg.progress = [](std::size_t it, double loss) {
        if (it % 100 == 0) std::cerr << "iteration " << it << " loss " << loss << "\n";
      };
    if (segment_seconds < 0.0) throw ValidationError("--segment-seconds must be >= 0");
    const std::size_t seg = static_cast<std::size_t>(segment_seconds * mc.sample_rate / static_cast<double>(hop));
    const optim::FitResult res = pipeline::fit_segments(observed, ptrs, init, cfg, seg, jobs);

    io::ParamFile pf;
    pf.hop_ms = mc.hop_ms;
    pf.sources = res.params;
    io::save_params(pf, out);
    if (!trace.empty()) io::write_text(trace, optim::loss_trace_csv(res));
    if (!stems_dir.empty()) {
      mixture::MixtureState st{res.params, ptrs, seed, observed.size(), {}};
      const mixture::MixtureOutput mo = mixture::synthesize_mixture(st);
      write_stems(stems_dir, mo.stems);
      io::write_wav(stems_dir / "mixture.wav", mo.mixture);
    }
    if (res.diverged) throw RuntimeFailure("fit diverged: " + res.diagnostic);
    if (!res.loss_trace.empty())
      std::cout << "loss " << res.loss_trace.front() << " -> " << res.loss_trace.back() << "\n";
  }
};

// ---- synth ----
struct SynthCmd {
  fs::path params_path, model_path, out_dir;
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    CLI::App* c = root.add_subcommand("synth", "Render stems and mixture from a parameter file");
    c->add_option("--params", params_path, "Parameter file")->required();
    c->add_option("--model", model_path, "Model file")->required();
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->add_option("--seed", seed, "Noise seed")->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    const io::ParamFile pf = io::load_params(params_path);
    const nets::SynthModel m = nets::load_model(model_path);
    const mixture::MixtureOutput mo = render(pf, m, seed);
    write_stems(out_dir, mo.stems);
    io::write_wav(out_dir / "mixture.wav", mo.mixture);
    std::cout << "wrote " << mo.stems.size() << " stems to " << out_dir.string() << "\n";
  }
};

// ---- eval ----
struct EvalCmd {
  fs::path est_path, ref_path, ref_audio, est_audio, model_path, score_path, out;
  double l_low = score::kDefaultLowLoudness;
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    CLI::App* c = root.add_subcommand("eval", "Score estimated parameters against references");
    c->add_option("--est", est_path, "Estimated parameter file")->required();
    c->add_option("--ref", ref_path, "Reference parameter file")->required();
    c->add_option("--ref-audio", ref_audio, "Directory with reference stem_N.wav files")->required();
    c->add_option("--est-audio", est_audio, "Directory with estimated stems (default: render with --model)");
    c->add_option("--model", model_path, "Model used to render estimated stems");
    c->add_option("--score", score_path, "Score: voiced mask from notes and sources matched by index");
    c->add_option("--l-low", l_low, "Silence loudness; frames above l_low + 1 count as voiced")->capture_default_str();
    c->add_option("--seed", seed, "Noise seed when rendering estimated stems")->capture_default_str();
    c->add_option("--out", out, "EvalReport JSON path");
    c->callback([this] { run(); });
  }

  void run() {
    const io::ParamFile est = io::load_params(est_path);
    const io::ParamFile ref = io::load_params(ref_path);
    const std::size_t R = ref.sources.size();
    const std::vector<dsp::AudioBuffer> ref_stems = read_stems(ref_audio, R);
    std::vector<dsp::AudioBuffer> est_stems;
    if (!est_audio.empty()) {
      est_stems = read_stems(est_audio, R);
    } else if (!model_path.empty()) {
      est_stems = render(est, nets::load_model(model_path), seed).stems;
    } else {
      throw ValidationError("eval: pass --est-audio or --model to obtain estimated stems");
    }
    std::vector<metrics::Mask> masks;
    if (!score_path.empty()) {
      const score::Score sc = score::load_score(score_path, R);
      for (std::size_t r = 0; r < R; ++r)
        masks.push_back(metrics::mask_from_roll(score::rasterize(sc.tracks.at(r), ref.frames(), ref.hop_ms, ref.sample_rate)));
    } else {
      for (const nets::SynthParams& p : ref.sources) masks.push_back(metrics::mask_from_loudness(p.loudness, l_low));
    }
    metrics::EvalReport report;
    report.assigned_by_index = !score_path.empty();
    report.estimate = metrics::evaluate(est, est_stems, ref, ref_stems, masks, report.assigned_by_index);
    report.reference_self = metrics::evaluate(ref, ref_stems, ref, ref_stems, masks, true);
    if (!out.empty()) io::write_text(out, metrics::report_to_json(report));
    std::cout << metrics::report_to_table(report);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture fitting with differentiable harmonic-plus-noise synthesizers"};
  app.require_subcommand(1);
  GenCmd gen;
  TrainCmd train;
  FitCmd fit;
  SynthCmd synth;
  EvalCmd eval;
  gen.add(app);
  train.add(app);
  fit.add(app);
  synth.add(app);
  eval.add(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << app.help();
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
