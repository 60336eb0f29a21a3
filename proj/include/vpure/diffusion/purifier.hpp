#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vpure/audio/waveform.hpp"
#include "vpure/diffusion/denoiser.hpp"
#include "vpure/diffusion/schedule.hpp"

namespace vpure::diffusion {

struct PurifierSettings {
  int t_pur = 3;
  std::size_t chunk_len = 16000;
};

/// Diffuse every fixed-length chunk to step t_pur in one closed-form jump,
/// then run t_pur ancestral reverse steps. Chunks draw independent noise
/// streams derived from rng_seed. t_pur == 0 returns the input unchanged.
audio::Waveform purify(const audio::Waveform& x_adv, const NoisePredictor& model,
                       const NoiseSchedule& schedule, const PurifierSettings& settings,
                       std::uint64_t rng_seed);

struct PurifierTrainingConfig {
  int epochs = 20;
  int batch_size = 4;
  std::size_t crop_len = 4096;
  double learning_rate = 2e-3;
  /// Steps are drawn uniformly from [1, t_sample_max]; 0 means T_max.
  int t_sample_max = 0;
  std::uint64_t seed = 0;
  DenoiserArch arch;
};

struct PurifierTrainingResult {
  WaveDenoiser model;
  /// Mean epsilon-prediction loss per epoch.
  std::vector<double> epoch_loss;
};

PurifierTrainingResult train_purifier(const std::vector<audio::Waveform>& dataset,
                                      const NoiseSchedule& schedule,
                                      const PurifierTrainingConfig& config);

struct PurifierCheckpoint {
  WaveDenoiser model;
  NoiseSchedule schedule;
  PurifierSettings settings;
};

void save_purifier(const std::filesystem::path& path, WaveDenoiser& model,
                   const NoiseSchedule& schedule, const PurifierSettings& settings);
PurifierCheckpoint load_purifier(const std::filesystem::path& path);

}  // namespace vpure::diffusion
