#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "vpure/audio/stft.hpp"
#include "vpure/audio/waveform.hpp"
#include "vpure/phoneme/dictionary.hpp"
#include "vpure/refiner/ou_sde.hpp"
#include "vpure/refiner/score_model.hpp"

namespace vpure::refiner {

struct SamplerSettings {
  int n_steps = 30;
  double corrector_snr = 0.4;
  int corrector_steps = 1;
  /// Starting diffusion time; NaN means the SDE's t_max.
  double t_ref = std::numeric_limits<double>::quiet_NaN();
  /// When false the sampler starts from m_pur itself instead of
  /// m_pur + sigma(t_ref) z.
  bool init_noise = true;
  /// Replace the final state m by m + sigma(tau_eps)^2 s(m, tau_eps).
  bool final_denoise = true;

  void validate() const;
  nlohmann::json to_json() const;
  static SamplerSettings from_json(const nlohmann::json& j);
};

struct TrainingPair {
  audio::ComplexSpectrogram clean;     // warped, peak-normalised
  audio::ComplexSpectrogram purified;  // warped, peak-normalised
  phoneme::PhonemeRepresentation phoneme_rep;  // linear magnitude
};

/// Normalises both signals by the purified peak, warps their spectrograms
/// and assembles Lambda from the transcript.
TrainingPair make_training_pair(const audio::Waveform& clean, const audio::Waveform& purified,
                                const phoneme::AlignedTranscript& transcript,
                                const phoneme::PhonemeDictionary& dict);

/// Square-root warping of the phoneme representation.
std::vector<double> warp_representation(const phoneme::PhonemeRepresentation& lam);

/// Per-tau weights of the same denoising score-matching integrand
/// |s + z/sigma|^2; they change the balance across tau, not the optimum.
enum class LossWeighting {
  kNone,            // plain E|s + z/sigma|^2
  kSigmaSquared,    // E|sigma s + z|^2
  kPreconditioned,  // unit-scale target for F
};

/// One DSM term for a crop: m_tau = forward_perturb(m0, y, tau, z). All
/// arrays are bin-major [bins x frames] in SDE-state units. Elements with
/// mask 0 are excluded; an empty mask keeps every element.
struct DsmSample {
  int bins = 0;
  int frames = 0;
  std::span<const Complex> m0;
  std::span<const Complex> y;
  std::span<const double> lambda;
  std::span<const Complex> z;
  std::span<const unsigned char> mask;
  double tau = 0.5;
};

/// Weighted DSM loss of `model` on one sample. With kNone this equals
/// dsm_loss(model.score(m_tau), z, sigma). When `backprop` is set the
/// gradient of the returned value is accumulated into the model parameters.
double dsm_training_loss(ScoreUNet& model, const DsmSample& sample, LossWeighting weighting,
                         bool backprop);

enum class ShortCropPolicy { kPadWithMask, kSkip };

struct RefinerTrainingConfig {
  int steps = 400;
  int batch_size = 4;
  int crop_frames = 256;
  ShortCropPolicy short_policy = ShortCropPolicy::kPadWithMask;
  double learning_rate = 1e-3;
  LossWeighting weighting = LossWeighting::kPreconditioned;
  /// Replace arch.residual_std by the RMS of (clean - purified) over the pairs.
  bool fit_residual_std = true;
  std::uint64_t seed = 0;
  ScoreNetArch arch;
};

struct RefinerTrainingResult {
  ScoreUNet model;
  /// Mean loss per block of `log_every` steps.
  std::vector<double> loss_history;
};

RefinerTrainingResult train_refiner(const std::vector<TrainingPair>& pairs,
                                    const OUSDEParams& params,
                                    const RefinerTrainingConfig& config,
                                    int log_every = 25);

/// Predictor-corrector reverse sampling from t_ref down to tau_eps.
audio::ComplexSpectrogram refine(const audio::ComplexSpectrogram& m_pur,
                                 const phoneme::PhonemeRepresentation& lam,
                                 const ScoreEstimator& model, const OUSDEParams& params,
                                 const SamplerSettings& sampler, std::uint64_t rng_seed);

enum class PhonemeGuidance { kAligned, kGlobalAverage, kZero };

struct RefineRequest {
  const phoneme::AlignedTranscript* transcript = nullptr;
  const phoneme::PhonemeDictionary* dictionary = nullptr;
  PhonemeGuidance guidance = PhonemeGuidance::kAligned;
};

/// normalise -> stft -> warp -> refine -> unwarp -> istft -> rescale.
audio::Waveform refine_waveform(const audio::Waveform& x_pur, const RefineRequest& request,
                                const ScoreEstimator& model, const OUSDEParams& params,
                                const SamplerSettings& sampler, std::uint64_t rng_seed,
                                const audio::SpectrogramConfig& config = {});

struct RefinerCheckpoint {
  ScoreUNet model;
  OUSDEParams params;
  SamplerSettings sampler;
  audio::SpectrogramConfig stft;
  std::string dictionary_fingerprint;
};

void save_refiner(const std::filesystem::path& path, ScoreUNet& model,
                  const SamplerSettings& sampler, const audio::SpectrogramConfig& stft,
                  const std::string& dictionary_fingerprint);
/// Fails with a checkpoint-mismatch error when `expected_stft` differs from
/// the configuration the model was trained with.
RefinerCheckpoint load_refiner(const std::filesystem::path& path,
                               const audio::SpectrogramConfig& expected_stft);

}  // namespace vpure::refiner
