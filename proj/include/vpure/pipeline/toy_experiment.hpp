#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "vpure/pipeline/config.hpp"
#include "vpure/pipeline/pairs.hpp"
#include "vpure/pipeline/stages.hpp"
#include "vpure/protect/encoder.hpp"

namespace vpure::pipeline {

/// End-to-end ablation on a synthetic corpus: every model is trained from
/// scratch on clips disjoint from the evaluation clips.
struct ToyExperimentConfig {
  int speakers = 2;
  int train_clips_per_speaker = 40;
  int test_clips_per_speaker = 10;
  double seconds = 1.0;
  int noise_clips = 4;
  std::uint64_t seed = 0;

  ScheduleParams schedule;
  diffusion::PurifierSettings purifier{.t_pur = 3};
  diffusion::PurifierTrainingConfig purifier_training = default_purifier_training();
  refiner::RefinerTrainingConfig refiner_training = default_refiner_training();
  /// Noise-free pairs by default; see default_pairs().
  PairBuildConfig pairs = default_pairs();
  refiner::OUSDEParams sde;
  refiner::SamplerSettings sampler;
  protect::EncoderTrainingConfig encoder_training;
  protect::ProtectionConfig protection;
  /// Decision threshold for SVA; nullopt places it at the clean EER.
  std::optional<double> threshold = 0.25;

  /// Trained models are cached here when set.
  std::filesystem::path cache_dir;
  std::size_t workers = 1;

  static diffusion::PurifierTrainingConfig default_purifier_training();
  static refiner::RefinerTrainingConfig default_refiner_training();
  /// Only the clean (no added noise) branch of the SNR augmentation.
  static PairBuildConfig default_pairs();
  nlohmann::json to_json() const;
};

struct ToyExperimentResult {
  /// Clean EER over held-out clips against enrollment.
  double eer = 0.0;
  double eer_threshold = 0.0;
  /// Threshold actually used for SVA.
  double threshold = 0.0;
  AblationTable table;
  std::map<std::string, double> timings;

  /// clean >= full > purify-only > protected in SVA and
  /// full > purify-only in mean similarity to clean.
  bool ordering_holds() const;
  nlohmann::json to_json() const;
};

ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& config);

}  // namespace vpure::pipeline
