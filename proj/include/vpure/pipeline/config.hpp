#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vpure/audio/stft.hpp"
#include "vpure/diffusion/purifier.hpp"
#include "vpure/diffusion/schedule.hpp"
#include "vpure/protect/attack.hpp"
#include "vpure/refiner/refiner.hpp"

namespace vpure::pipeline {

struct ScheduleParams {
  int t_max = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  diffusion::NoiseSchedule build() const;
};

nlohmann::json stft_to_json(const audio::SpectrogramConfig& c);
audio::SpectrogramConfig stft_from_json(const nlohmann::json& j);

struct PipelineConfig {
  static constexpr int kVersion = 1;

  audio::SpectrogramConfig stft;
  ScheduleParams schedule;
  diffusion::PurifierSettings purifier;
  refiner::OUSDEParams sde;
  refiner::SamplerSettings sampler;
  protect::ProtectionConfig protection;
  /// Verification threshold used when no EER reference is given.
  double threshold = 0.25;
  std::map<std::string, std::uint64_t> seeds = default_seeds();
  std::map<std::string, std::string> paths;
  std::size_t workers = 1;

  static std::map<std::string, std::uint64_t> default_seeds();

  /// Missing stage seeds are a config error.
  std::uint64_t seed(const std::string& stage) const;
  /// Each named path must be set and exist.
  void require_paths(const std::vector<std::string>& keys) const;
  void validate() const;
  std::string fingerprint() const;

  nlohmann::json to_json() const;
  /// Absent keys keep their defaults; unknown keys, a wrong version or
  /// malformed values are config errors.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
};

}  // namespace vpure::pipeline
