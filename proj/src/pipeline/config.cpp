#include "vpure/pipeline/config.hpp"

#include <set>

#include "vpure/common/digest.hpp"
#include "vpure/common/error.hpp"

namespace vpure::pipeline {
namespace {

Error config_error(const std::string& what) { return Error(ErrorKind::kConfig, what); }

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) throw config_error(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw config_error(where + ": unknown key '" + k + "'");
  }
}

}  // namespace

diffusion::NoiseSchedule ScheduleParams::build() const {
  return diffusion::build_schedule(t_max, beta_start, beta_end);
}

nlohmann::json stft_to_json(const audio::SpectrogramConfig& c) {
  return {{"window_size", c.window_size}, {"hop_length", c.hop_length}, {"window", "sqrt_hann"}};
}

audio::SpectrogramConfig stft_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"window_size", "hop_length", "window"}, "stft");
  audio::SpectrogramConfig c;
  c.window_size = j.value("window_size", c.window_size);
  c.hop_length = j.value("hop_length", c.hop_length);
  if (j.value("window", std::string("sqrt_hann")) != "sqrt_hann") {
    throw config_error("stft: only the sqrt_hann window is supported");
  }
  return c;
}

std::map<std::string, std::uint64_t> PipelineConfig::default_seeds() {
  return {{"protect", 11}, {"purify", 12}, {"refine", 13}, {"pairs", 14},
          {"train.purifier", 15}, {"train.refiner", 16}, {"train.encoder", 17}, {"synth", 18}};
}

std::uint64_t PipelineConfig::seed(const std::string& stage) const {
  const auto it = seeds.find(stage);
  if (it == seeds.end()) throw config_error("no seed configured for stage '" + stage + "'");
  return it->second;
}

void PipelineConfig::require_paths(const std::vector<std::string>& keys) const {
  for (const auto& k : keys) {
    const auto it = paths.find(k);
    if (it == paths.end() || it->second.empty()) throw config_error("path '" + k + "' is not set");
    if (!std::filesystem::exists(it->second)) {
      throw config_error("path '" + k + "' does not exist: " + it->second);
    }
  }
}

void PipelineConfig::validate() const {
  try {
    stft.validate();
    schedule.build();
    sde.validate();
    sampler.validate();
    protection.validate();
  } catch (const Error& e) {
    throw config_error(e.what());
  }
  if (purifier.t_pur < 0 || purifier.t_pur > schedule.t_max) {
    throw config_error("purifier.t_pur outside [0, schedule.t_max]");
  }
  if (purifier.chunk_len == 0) throw config_error("purifier.chunk_len must be positive");
  if (!(threshold >= -1.0 && threshold <= 1.0)) throw config_error("threshold outside [-1, 1]");
  if (workers == 0) throw config_error("workers must be positive");
}

std::string PipelineConfig::fingerprint() const { return sha256_hex(to_json().dump()).substr(0, 16); }

nlohmann::json PipelineConfig::to_json() const {
  return {
      {"version", kVersion},
      {"stft", stft_to_json(stft)},
      {"schedule", {{"t_max", schedule.t_max}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}}},
      {"purifier", {{"t_pur", purifier.t_pur}, {"chunk_len", purifier.chunk_len}}},
      {"sde", sde.to_json()},
      {"sampler", sampler.to_json()},
      {"protection", protection.to_json()},
      {"threshold", threshold},
      {"seeds", seeds},
      {"paths", paths},
      {"workers", workers},
  };
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"version", "stft", "schedule", "purifier", "sde", "sampler", "protection",
                     "threshold", "seeds", "paths", "workers"},
                 "config");
  if (!j.contains("version")) throw config_error("config: missing version");
  PipelineConfig c;
  try {
    if (j.at("version").get<int>() != kVersion) {
      throw config_error("config: unsupported version " + j.at("version").dump());
    }
    if (j.contains("stft")) c.stft = stft_from_json(j.at("stft"));
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      reject_unknown(s, {"t_max", "beta_start", "beta_end"}, "schedule");
      c.schedule.t_max = s.value("t_max", c.schedule.t_max);
      c.schedule.beta_start = s.value("beta_start", c.schedule.beta_start);
      c.schedule.beta_end = s.value("beta_end", c.schedule.beta_end);
    }
    if (j.contains("purifier")) {
      const auto& p = j.at("purifier");
      reject_unknown(p, {"t_pur", "chunk_len"}, "purifier");
      c.purifier.t_pur = p.value("t_pur", c.purifier.t_pur);
      c.purifier.chunk_len = p.value("chunk_len", c.purifier.chunk_len);
    }
    if (j.contains("sde")) c.sde = refiner::OUSDEParams::from_json(j.at("sde"));
    if (j.contains("sampler")) c.sampler = refiner::SamplerSettings::from_json(j.at("sampler"));
    if (j.contains("protection")) c.protection = protect::ProtectionConfig::from_json(j.at("protection"));
    c.threshold = j.value("threshold", c.threshold);
    if (j.contains("seeds")) {
      for (const auto& [k, v] : j.at("seeds").items()) c.seeds[k] = v.get<std::uint64_t>();
    }
    if (j.contains("paths")) c.paths = j.at("paths").get<std::map<std::string, std::string>>();
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw config_error("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace vpure::pipeline
