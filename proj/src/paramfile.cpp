#include <cmath>

#include <json.hpp>

#include "mixsynth/blob.hpp"
#include "mixsynth/error.hpp"
#include "mixsynth/io.hpp"

namespace mixsynth::io {

using nlohmann::json;

void ParamFile::validate() const {
  if (sources.empty()) throw ValidationError("param file: no sources");
  if (sample_rate != dsp::kSampleRate) throw ValidationError("param file: sample_rate must be 16000");
  (void)dsp::ms_to_samples(hop_ms, sample_rate);
  for (std::size_t r = 0; r < sources.size(); ++r) {
    sources[r].validate(latent_dim());
    if (sources[r].frames() != frames())
      throw ValidationError("param file: source " + std::to_string(r) + " has " + std::to_string(sources[r].frames()) +
                            " frames, source 0 has " + std::to_string(frames()));
  }
}

std::string params_to_json(const ParamFile& file) {
  file.validate();
  json sources = json::array();
  for (const nets::SynthParams& p : file.sources)
    sources.push_back({{"f0", encode_f64(p.f0)}, {"z", encode_f64(p.z.values())}, {"loudness", encode_f64(p.loudness)}});
  json j = {{"version", kParamVersion},       {"sample_rate", file.sample_rate}, {"hop_ms", file.hop_ms},
            {"frames", file.frames()},        {"latent_dim", file.latent_dim()}, {"n_sources", file.sources.size()},
            {"sources", std::move(sources)}};
  return j.dump(2) + "\n";
}

ParamFile params_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("param file: parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("version") || j["version"] != kParamVersion)
    throw SchemaError("version: expected " + std::string(kParamVersion));
  auto count = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number_unsigned()) throw SchemaError(std::string(key) + ": expected a nonnegative integer");
    return j[key].get<std::size_t>();
  };
  auto real = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number()) throw SchemaError(std::string(key) + ": expected a number");
    return j[key].get<double>();
  };
  ParamFile f;
  f.sample_rate = real("sample_rate");
  f.hop_ms = real("hop_ms");
  const std::size_t T = count("frames"), D = count("latent_dim"), R = count("n_sources");
  if (!j.contains("sources") || !j["sources"].is_array() || j["sources"].size() != R)
    throw SchemaError("sources: expected an array of " + std::to_string(R) + " entries");
  for (std::size_t r = 0; r < R; ++r) {
    const json& s = j["sources"][r];
    const std::string where = "sources[" + std::to_string(r) + "].";
    for (const char* key : {"f0", "z", "loudness"})
      if (!s.is_object() || !s.contains(key) || !s[key].is_string()) throw SchemaError(where + key + ": missing");
    nets::SynthParams p;
    p.f0 = decode_f64(s["f0"].get<std::string>(), T, where + "f0");
    p.z = Tensor({T, D}, decode_f64(s["z"].get<std::string>(), T * D, where + "z"));
    p.loudness = decode_f64(s["loudness"].get<std::string>(), T, where + "loudness");
    f.sources.push_back(std::move(p));
  }
  try {
    f.validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw SchemaError(e.what());
  }
  return f;
}

void save_params(const ParamFile& file, const std::filesystem::path& path) { write_text(path, params_to_json(file)); }

ParamFile load_params(const std::filesystem::path& path) { return params_from_json(read_text(path)); }

}  // namespace mixsynth::io
