#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vpure/audio/stft.hpp"
#include "vpure/audio/waveform.hpp"
#include "vpure/nn/tensor.hpp"

namespace vpure::protect {

class SpeakerEncoder {
 public:
  virtual ~SpeakerEncoder() = default;
  virtual int dim() const = 0;
  /// Unit-norm embedding.
  virtual std::vector<double> embed(const audio::Waveform& x) const = 0;
  /// d<embed(x), direction>/dx.
  virtual std::vector<double> embed_gradient(const audio::Waveform& x,
                                             std::span<const double> direction) const = 0;
};

double cosine(std::span<const double> a, std::span<const double> b);

struct EncoderArch {
  int hidden = 32;
  int dim = 16;
  /// Floor added to bin power before the log, relative to the clip's mean
  /// bin power.
  double log_floor = 1e-3;

  nlohmann::json to_json() const;
  static EncoderArch from_json(const nlohmann::json& j);
};

/// log power spectrum (floored relative to mean power), mean-removed per clip -> per-frame tanh layer ->
/// mean over frames -> linear projection -> L2 normalisation.
class ToySpeakerEncoder final : public SpeakerEncoder {
 public:
  static constexpr double kAbsoluteFloor = 1e-12;

  ToySpeakerEncoder(EncoderArch arch, const audio::SpectrogramConfig& stft,
                    std::uint64_t init_seed = 0);

  int dim() const override { return arch_.dim; }
  std::vector<double> embed(const audio::Waveform& x) const override;
  std::vector<double> embed_gradient(const audio::Waveform& x,
                                     std::span<const double> direction) const override;

  /// Frame-major [n_frames x n_bins] features.
  std::vector<double> features(const audio::Waveform& x, int& n_frames) const;
  /// Unnormalised embedding from features; caches the hidden activations.
  std::vector<double> project(std::span<const double> feats, int n_frames,
                              std::vector<double>* hidden = nullptr) const;
  /// Accumulates parameter gradients given dL/d(unnormalised embedding).
  void backward(std::span<const double> feats, int n_frames, std::span<const double> hidden,
                std::span<const double> grad_embedding);

  std::vector<nn::Param*> parameters();
  const EncoderArch& arch() const { return arch_; }
  double floor_level(std::span<const double> power) const;
  const audio::SpectrogramConfig& stft_config() const { return stft_; }

 private:
  EncoderArch arch_;
  audio::SpectrogramConfig stft_;
  nn::Param w1_, b1_, w2_, b2_;
};

struct LabeledClip {
  audio::Waveform wave;
  std::string speaker;
};

struct EncoderTrainingConfig {
  int steps = 300;
  int batch_size = 16;
  double learning_rate = 3e-3;
  /// Cosine-softmax logit scale.
  double scale = 10.0;
  /// Share of training draws that get additive white noise, and its SNR range.
  double noise_prob = 0.5;
  double snr_db_min = 5.0;
  double snr_db_max = 30.0;
  std::uint64_t seed = 0;
  EncoderArch arch;
};

ToySpeakerEncoder train_toy_encoder(const std::vector<LabeledClip>& corpus,
                                    const EncoderTrainingConfig& config = {},
                                    const audio::SpectrogramConfig& stft = {});

void save_encoder(const std::filesystem::path& path, ToySpeakerEncoder& encoder);
ToySpeakerEncoder load_encoder(const std::filesystem::path& path,
                               const audio::SpectrogramConfig& expected_stft);

}  // namespace vpure::protect
