#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vpure/diffusion/purifier.hpp"
#include "vpure/eval/metrics.hpp"
#include "vpure/phoneme/dictionary.hpp"
#include "vpure/refiner/refiner.hpp"

namespace vpure::pipeline {

/// Borrowed models and settings for the two processing stages.
struct StageModels {
  const diffusion::NoisePredictor* purifier = nullptr;
  const diffusion::NoiseSchedule* schedule = nullptr;
  diffusion::PurifierSettings purifier_settings;
  const refiner::ScoreEstimator* refiner = nullptr;
  refiner::OUSDEParams sde;
  refiner::SamplerSettings sampler;
  const phoneme::PhonemeDictionary* dictionary = nullptr;
  audio::SpectrogramConfig stft;
};

struct StageToggles {
  bool purification = true;
  bool refinement = true;
  bool phoneme = true;

  /// Row label in the ablation table.
  std::string name() const;
  nlohmann::json to_json() const;
};

/// The four ablation rows in table order: without purification, without
/// refinement, without phoneme guidance, full.
const std::vector<StageToggles>& ablation_grid();

/// Purify and/or refine one clip. Without phoneme guidance the refiner sees
/// the dictionary's global average in every column. `transcript` is only
/// read when refinement and phoneme guidance are both on.
audio::Waveform process_clip(const audio::Waveform& x, const phoneme::AlignedTranscript* transcript,
                             const StageModels& models, const StageToggles& toggles,
                             std::uint64_t purify_seed, std::uint64_t refine_seed);

/// Seeds keyed by clip id so that a clip gets the same noise in every
/// condition and regardless of batch order.
std::uint64_t clip_seed(std::uint64_t base, const std::string& stage, const std::string& clip_id);

struct EvalClip {
  std::string id;
  std::string speaker;
  audio::Waveform clean;
};

struct EvalContext {
  const protect::SpeakerEncoder* encoder = nullptr;
  double threshold = 0.25;
  /// Enrollment utterance per speaker. A speaker without one is verified
  /// against each clip's own clean version.
  std::map<std::string, audio::Waveform> enrollment;
  std::size_t workers = 1;
};

struct ConditionResult {
  std::string name;
  eval::VerificationReport verification;
  eval::SimilarityReport similarity;

  double sva() const { return verification.sva; }
  double mean_similarity() const { return similarity.summary.mean; }
  nlohmann::json summary_json() const;
};

/// `processed[i]` belongs to `clips[i]`.
ConditionResult evaluate_condition(const std::string& name, const std::vector<EvalClip>& clips,
                                   const std::vector<audio::Waveform>& processed,
                                   const EvalContext& context);

struct AblationTable {
  ConditionResult clean;
  ConditionResult protected_input;
  /// One entry per ablation_grid() row.
  std::vector<ConditionResult> rows;
  std::vector<StageToggles> toggles;

  const ConditionResult& row(const std::string& name) const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

struct AblationOutputs {
  AblationTable table;
  /// Processed waveforms per row, aligned with the input clips.
  std::vector<std::vector<audio::Waveform>> processed;
};

/// Runs every ablation row on `protected_clips` and evaluates it together
/// with the clean and protected baselines. `transcripts[i]` may be null when
/// no row needs it.
AblationOutputs run_ablation(const std::vector<EvalClip>& clips,
                             const std::vector<audio::Waveform>& protected_clips,
                             const std::vector<const phoneme::AlignedTranscript*>& transcripts,
                             const StageModels& models, const EvalContext& context,
                             std::uint64_t purify_seed, std::uint64_t refine_seed);

}  // namespace vpure::pipeline
