#include "mixsynth/nets.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

#include "mixsynth/blob.hpp"
#include "mixsynth/error.hpp"
#include "mixsynth/ops.hpp"

namespace mixsynth::nets {

using nlohmann::json;

void SynthParams::validate(std::size_t D) const {
  const std::size_t T = f0.size();
  if (T == 0) throw ValidationError("synth params: no frames");
  if (loudness.size() != T || z.rank() != 2 || z.rows() != T) {
    throw ValidationError("synth params: f0 has " + std::to_string(T) + " frames, loudness " +
                          std::to_string(loudness.size()) + ", z " + shape_string(z.shape()));
  }
  if (z.cols() != D) {
    throw ValidationError("synth params: latent width " + std::to_string(z.cols()) + ", model expects " + std::to_string(D));
  }
  auto finite = [](std::span<const double> v, const char* name) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!std::isfinite(v[i])) throw ValidationError(std::string("synth params: non-finite ") + name + " at index " + std::to_string(i));
  };
  finite(f0, "f0");
  finite(z.values(), "z");
  finite(loudness, "loudness");
}

dsp::MfccConfig ModelConfig::encoder_mfcc() const {
  dsp::MfccConfig c = dsp::MfccConfig::encoder();
  c.hop_ms = hop_ms;
  c.frame_ms = 2.0 * hop_ms;
  c.n_mels = encoder_mels;
  c.n_coeffs = n_mfcc;
  c.fmax = std::min(c.fmax, sample_rate / 2.0);
  return c;
}

void ModelConfig::validate() const {
  if (sample_rate != dsp::kSampleRate) throw ValidationError("model config: sample_rate must be 16000");
  (void)hop();
  if (n_harmonics < 1) throw ValidationError("model config: n_harmonics must be >= 1");
  if (n_noise_bands < 2) throw ValidationError("model config: n_noise_bands must be >= 2");
  if (latent_dim < 1 || decoder_hidden < 1 || decoder_layers < 1 || encoder_hidden < 1)
    throw ValidationError("model config: layer widths and counts must be >= 1");
  if (n_mfcc < 1 || n_mfcc > encoder_mels) throw ValidationError("model config: need 1 <= n_mfcc <= encoder_mels");
  if (reverb_length < 1) throw ValidationError("model config: reverb_length must be >= 1");
}

namespace {

Dense glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  Dense d{Tensor({in, out}), Tensor({out})};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (double& w : d.weight.values()) w = u(rng);
  return d;
}

void check_dense(const Dense& d, std::size_t in, std::size_t out, const std::string& name) {
  if (d.weight.shape() != Tensor::Shape{in, out})
    throw SchemaError(name + ".weight: expected shape " + shape_string({in, out}) + ", found " + shape_string(d.weight.shape()));
  if (d.bias.shape() != Tensor::Shape{out})
    throw SchemaError(name + ".bias: expected shape " + shape_string({out}) + ", found " + shape_string(d.bias.shape()));
  for (double v : d.weight.values())
    if (!std::isfinite(v)) throw SchemaError(name + ".weight: non-finite value");
  for (double v : d.bias.values())
    if (!std::isfinite(v)) throw SchemaError(name + ".bias: non-finite value");
}

}  // namespace

SynthModel SynthModel::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  SynthModel m;
  m.config = config;
  m.encoder.push_back(glorot(config.n_mfcc, config.encoder_hidden, rng));
  m.encoder.push_back(glorot(config.encoder_hidden, config.latent_dim, rng));
  std::size_t in = config.decoder_inputs();
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    m.decoder.push_back(glorot(in, config.decoder_hidden, rng));
    in = config.decoder_hidden;
  }
  // z rows start small: a fresh decoder is driven by pitch and loudness and
  // the latent only perturbs it, which keeps the fitting landscape in z wide
  Tensor& first = m.decoder.front().weight;
  for (std::size_t i = 2; i < first.rows(); ++i)
    for (std::size_t j = 0; j < first.cols(); ++j) first.at(i, j) *= kLatentInitGain;
  m.amplitude_head = glorot(in, 1, rng);
  m.harmonic_head = glorot(in, config.n_harmonics, rng);
  m.noise_head = glorot(in, config.n_noise_bands, rng);
  m.reverb = synth::ReverbIR::dry(config.reverb_length);
  m.reverb.enabled = config.reverb_enabled;
  return m;
}

void SynthModel::validate() const {
  config.validate();
  if (encoder.size() != 2) throw SchemaError("encoder: expected 2 layers, found " + std::to_string(encoder.size()));
  check_dense(encoder[0], config.n_mfcc, config.encoder_hidden, "encoder[0]");
  check_dense(encoder[1], config.encoder_hidden, config.latent_dim, "encoder[1]");
  if (decoder.size() != config.decoder_layers)
    throw SchemaError("decoder: expected " + std::to_string(config.decoder_layers) + " layers, found " +
                      std::to_string(decoder.size()));
  std::size_t in = config.decoder_inputs();
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    check_dense(decoder[i], in, config.decoder_hidden, "decoder[" + std::to_string(i) + "]");
    in = config.decoder_hidden;
  }
  check_dense(amplitude_head, in, 1, "heads.amplitude");
  check_dense(harmonic_head, in, config.n_harmonics, "heads.harmonic");
  check_dense(noise_head, in, config.n_noise_bands, "heads.noise");
  if (reverb.taps.size() != config.reverb_length)
    throw SchemaError("reverb.taps: expected " + std::to_string(config.reverb_length) + " taps, found " +
                      std::to_string(reverb.taps.size()));
  if (reverb.enabled != config.reverb_enabled) throw SchemaError("reverb.enabled: disagrees with config.reverb_enabled");
  if (reverb.taps.empty() || reverb.taps[0] != 1.0) throw SchemaError("reverb.taps: first tap must be 1");
  for (double v : reverb.taps)
    if (!std::isfinite(v)) throw SchemaError("reverb.taps: non-finite value");
}

std::vector<Tensor*> SynthModel::parameters() {
  std::vector<Tensor*> out;
  auto push = [&](Dense& d) {
    out.push_back(&d.weight);
    out.push_back(&d.bias);
  };
  for (Dense& d : encoder) push(d);
  for (Dense& d : decoder) push(d);
  push(amplitude_head);
  push(harmonic_head);
  push(noise_head);
  return out;
}

std::vector<const Tensor*> SynthModel::parameters() const {
  std::vector<const Tensor*> out;
  for (Tensor* t : const_cast<SynthModel*>(this)->parameters()) out.push_back(t);
  return out;
}

BoundModel bind(ad::DiffGraph& g, const SynthModel& model, bool trainable) {
  BoundModel b;
  b.model = &model;
  auto leaf = [&](const Tensor& t) {
    ad::DiffValue v = trainable ? g.variable(t) : g.constant(t);
    b.all.push_back(v);
    return v;
  };
  auto dense = [&](const Dense& d) { return BoundDense{leaf(d.weight), leaf(d.bias)}; };
  for (const Dense& d : model.encoder) b.encoder.push_back(dense(d));
  for (const Dense& d : model.decoder) b.decoder.push_back(dense(d));
  b.amplitude_head = dense(model.amplitude_head);
  b.harmonic_head = dense(model.harmonic_head);
  b.noise_head = dense(model.noise_head);
  if (model.reverb.enabled) b.reverb = leaf(Tensor::vector(model.reverb.taps));
  return b;
}

namespace {

ad::DiffValue apply(const BoundDense& d, ad::DiffValue x) { return ad::affine(x, d.weight, d.bias); }

ad::DiffValue hidden(const BoundDense& d, ad::DiffValue x) {
  return ad::silu(ad::layer_norm_rows(apply(d, x)));
}

// 2 sigmoid(x)^ln 10 + 1e-7: positive, bounded, and close to exp for small x
ad::DiffValue exp_sigmoid(ad::DiffValue x) {
  return ad::offset(ad::scale(ad::power(ad::sigmoid(x), std::numbers::ln10), 2.0), 1e-7);
}

}  // namespace

synth::DiffControls decode(const BoundModel& m, ad::DiffValue f0, ad::DiffValue z, ad::DiffValue loudness) {
  const std::size_t T = f0.size();
  if (loudness.size() != T || z.data().rank() != 2 || z.data().rows() != T ||
      z.data().cols() != m.model->config.latent_dim) {
    throw ShapeError("decode: f0 " + shape_string(f0.shape()) + ", z " + shape_string(z.shape()) + ", loudness " +
                     shape_string(loudness.shape()) + " for latent width " + std::to_string(m.model->config.latent_dim));
  }
  // midi / 127 and loudness mapped so that [-10, -2] bels spans [-1, 1]
  const double midi_shift = 69.0 - 12.0 * std::log2(440.0);
  const ad::DiffValue pitch =
      ad::scale(ad::offset(ad::scale(ad::log(f0, 1e-7), 12.0 / std::numbers::ln2), midi_shift), 1.0 / 127.0);
  const ad::DiffValue level = ad::scale(ad::offset(loudness, 6.0), 0.25);
  const ad::DiffValue parts[] = {pitch, level, z};
  ad::DiffValue x = ad::concat_cols(parts);
  for (const BoundDense& d : m.decoder) x = hidden(d, x);
  synth::DiffControls c;
  c.amplitude = exp_sigmoid(apply(m.amplitude_head, x));
  c.distribution = ad::softmax_rows(apply(m.harmonic_head, x));
  c.noise = exp_sigmoid(ad::offset(apply(m.noise_head, x), -5.0));
  return c;
}

ad::DiffValue encode(const BoundModel& m, ad::DiffValue features) {
  return apply(m.encoder[1], hidden(m.encoder[0], features));
}

ad::DiffValue render(const BoundModel& m, ad::DiffValue f0, ad::DiffValue z, ad::DiffValue loudness,
                     std::shared_ptr<const ad::NoiseExcitation> excitation, std::size_t n_samples) {
  const synth::DiffControls c = decode(m, f0, z, loudness);
  return synth::synthesize(f0, c, m.reverb, std::move(excitation), n_samples, m.model->config.synth());
}

Tensor encode_timbre(const dsp::AudioBuffer& x, const SynthModel& model) {
  const std::size_t hop = model.config.hop();
  if (x.size() == 0 || x.size() % hop != 0) {
    throw ValidationError("encode_timbre: " + std::to_string(x.size()) + " samples is not a whole number of " +
                          std::to_string(hop) + "-sample frames");
  }
  ad::DiffGraph g;
  const BoundModel b = bind(g, model, false);
  return encode(b, g.constant(dsp::mfcc(x, model.config.encoder_mfcc()))).data();
}

synth::ControlSignals decode(const SynthParams& params, const SynthModel& model) {
  params.validate(model.config.latent_dim);
  ad::DiffGraph g;
  const BoundModel b = bind(g, model, false);
  const synth::DiffControls c =
      decode(b, g.constant(Tensor::vector(params.f0)), g.constant(params.z), g.constant(Tensor::vector(params.loudness)));
  return {c.amplitude.data().storage(), c.distribution.data(), c.noise.data()};
}

namespace {

json dense_json(const Dense& d) {
  return {{"in", d.weight.rows()},
          {"out", d.weight.cols()},
          {"weight", io::encode_f64(d.weight.values())},
          {"bias", io::encode_f64(d.bias.values())}};
}

const json& field(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + key + ": missing");
  return j.at(key);
}

std::size_t count_field(const json& j, const std::string& key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number_unsigned()) throw SchemaError(where + key + ": expected a nonnegative integer");
  return v.get<std::size_t>();
}

std::string string_field(const json& j, const std::string& key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_string()) throw SchemaError(where + key + ": expected a string");
  return v.get<std::string>();
}

Dense dense_from(const json& j, std::size_t in, std::size_t out, const std::string& name) {
  const std::string where = name + ".";
  const std::size_t jin = count_field(j, "in", where), jout = count_field(j, "out", where);
  if (jin != in) throw SchemaError(where + "in: expected " + std::to_string(in) + ", found " + std::to_string(jin));
  if (jout != out) throw SchemaError(where + "out: expected " + std::to_string(out) + ", found " + std::to_string(jout));
  Dense d;
  d.weight = Tensor({in, out}, io::decode_f64(string_field(j, "weight", where), in * out, where + "weight"));
  d.bias = Tensor({out}, io::decode_f64(string_field(j, "bias", where), out, where + "bias"));
  return d;
}

}  // namespace

std::string model_to_json(const SynthModel& model) {
  model.validate();
  const ModelConfig& c = model.config;
  json j;
  j["version"] = kModelVersion;
  j["config"] = {{"sample_rate", c.sample_rate},       {"hop_ms", c.hop_ms},
                 {"n_harmonics", c.n_harmonics},       {"n_noise_bands", c.n_noise_bands},
                 {"latent_dim", c.latent_dim},         {"decoder_hidden", c.decoder_hidden},
                 {"decoder_layers", c.decoder_layers}, {"encoder_hidden", c.encoder_hidden},
                 {"n_mfcc", c.n_mfcc},                 {"encoder_mels", c.encoder_mels},
                 {"reverb_length", c.reverb_length},   {"reverb_enabled", c.reverb_enabled}};
  j["encoder"] = json::array();
  for (const Dense& d : model.encoder) j["encoder"].push_back(dense_json(d));
  j["decoder"] = json::array();
  for (const Dense& d : model.decoder) j["decoder"].push_back(dense_json(d));
  j["heads"] = {{"amplitude", dense_json(model.amplitude_head)},
                {"harmonic", dense_json(model.harmonic_head)},
                {"noise", dense_json(model.noise_head)}};
  j["reverb"] = {{"enabled", model.reverb.enabled}, {"taps", io::encode_f64(model.reverb.taps)}};
  return j.dump(2) + "\n";
}

SynthModel model_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("model: parse error: ") + e.what());
  }
  const std::string version = string_field(j, "version", "");
  if (version != kModelVersion)
    throw SchemaError("version: expected " + std::string(kModelVersion) + ", found " + version);

  const json& jc = field(j, "config", "");
  auto real = [&](const std::string& key) {
    const json& v = field(jc, key, "config.");
    if (!v.is_number()) throw SchemaError("config." + key + ": expected a number");
    return v.get<double>();
  };
  ModelConfig c;
  c.sample_rate = real("sample_rate");
  c.hop_ms = real("hop_ms");
  c.n_harmonics = count_field(jc, "n_harmonics", "config.");
  c.n_noise_bands = count_field(jc, "n_noise_bands", "config.");
  c.latent_dim = count_field(jc, "latent_dim", "config.");
  c.decoder_hidden = count_field(jc, "decoder_hidden", "config.");
  c.decoder_layers = count_field(jc, "decoder_layers", "config.");
  c.encoder_hidden = count_field(jc, "encoder_hidden", "config.");
  c.n_mfcc = count_field(jc, "n_mfcc", "config.");
  c.encoder_mels = count_field(jc, "encoder_mels", "config.");
  c.reverb_length = count_field(jc, "reverb_length", "config.");
  if (!field(jc, "reverb_enabled", "config.").is_boolean()) throw SchemaError("config.reverb_enabled: expected a boolean");
  c.reverb_enabled = jc.at("reverb_enabled").get<bool>();
  try {
    c.validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw SchemaError(e.what());
  }

  SynthModel m;
  m.config = c;
  const json& enc = field(j, "encoder", "");
  if (!enc.is_array() || enc.size() != 2) throw SchemaError("encoder: expected an array of 2 layers");
  m.encoder.push_back(dense_from(enc[0], c.n_mfcc, c.encoder_hidden, "encoder[0]"));
  m.encoder.push_back(dense_from(enc[1], c.encoder_hidden, c.latent_dim, "encoder[1]"));
  const json& dec = field(j, "decoder", "");
  if (!dec.is_array() || dec.size() != c.decoder_layers)
    throw SchemaError("decoder: expected an array of " + std::to_string(c.decoder_layers) + " layers");
  std::size_t in = c.decoder_inputs();
  for (std::size_t i = 0; i < dec.size(); ++i) {
    m.decoder.push_back(dense_from(dec[i], in, c.decoder_hidden, "decoder[" + std::to_string(i) + "]"));
    in = c.decoder_hidden;
  }
  const json& heads = field(j, "heads", "");
  m.amplitude_head = dense_from(field(heads, "amplitude", "heads."), in, 1, "heads.amplitude");
  m.harmonic_head = dense_from(field(heads, "harmonic", "heads."), in, c.n_harmonics, "heads.harmonic");
  m.noise_head = dense_from(field(heads, "noise", "heads."), in, c.n_noise_bands, "heads.noise");
  const json& rv = field(j, "reverb", "");
  if (!field(rv, "enabled", "reverb.").is_boolean()) throw SchemaError("reverb.enabled: expected a boolean");
  m.reverb.enabled = rv.at("enabled").get<bool>();
  m.reverb.taps = io::decode_f64(string_field(rv, "taps", "reverb."), c.reverb_length, "reverb.taps");
  m.validate();
  return m;
}

void save_model(const SynthModel& model, const std::filesystem::path& path) {
  io::write_text(path, model_to_json(model));
}

SynthModel load_model(const std::filesystem::path& path) { return model_from_json(io::read_text(path)); }

}  // namespace mixsynth::nets
