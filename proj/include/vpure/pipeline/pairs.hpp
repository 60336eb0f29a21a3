#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "vpure/audio/waveform.hpp"
#include "vpure/diffusion/purifier.hpp"
#include "vpure/phoneme/dictionary.hpp"
#include "vpure/refiner/refiner.hpp"

namespace vpure::pipeline {

enum class NoisePolicy { kLoop, kNoLoop };

struct PairBuildConfig {
  /// nullopt entries leave the clip clean.
  std::vector<std::optional<double>> snr_levels = {0.0, 5.0, 10.0, 15.0, std::nullopt};
  int t_pur = 5;
  NoisePolicy noise_policy = NoisePolicy::kLoop;
};

/// clean + g * noise with g chosen so that the full-clip power ratio is
/// snr_db. noise must be at least as long as clean.
audio::Waveform mix_at_snr(const audio::Waveform& clean, const audio::Waveform& noise,
                           double snr_db);

/// n samples of `noise` starting at `offset`, wrapping around under kLoop.
/// Under kNoLoop a segment running past the end is a data error.
audio::Waveform noise_segment(const audio::Waveform& noise, std::size_t offset, std::size_t n,
                              NoisePolicy policy);

/// What happened to one clip; kept for manifests and tests.
struct PairRecord {
  std::optional<double> snr_db;
  std::size_t noise_index = 0;
  std::size_t noise_offset = 0;
  audio::Waveform purifier_input;
  audio::Waveform purified;
};

struct PurifierHandle {
  const diffusion::NoisePredictor* model = nullptr;
  const diffusion::NoiseSchedule* schedule = nullptr;
};

/// Clip i draws its SNR level, noise clip and offset from
/// derive_seed(seed, "pairs.clip", i) and its purification noise from
/// derive_seed(seed, "pairs.purify", i), so the result does not depend on
/// `workers`.
std::vector<refiner::TrainingPair> build_training_pairs(
    const std::vector<phoneme::AlignedUtterance>& clean_corpus,
    const std::vector<audio::Waveform>& noise_corpus, const PurifierHandle& purifier,
    const phoneme::PhonemeDictionary& dictionary, std::uint64_t seed,
    const PairBuildConfig& config = {}, std::vector<PairRecord>* records = nullptr,
    std::size_t workers = 1);

}  // namespace vpure::pipeline
