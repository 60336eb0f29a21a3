#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "vpure/audio/waveform.hpp"

namespace vpure::audio {

enum class WindowKind { kSqrtHann };

struct SpectrogramConfig {
  int window_size = 510;
  int hop_length = 128;
  WindowKind window = WindowKind::kSqrtHann;

  int n_bins() const { return window_size / 2 + 1; }
  int pad() const { return window_size / 2; }
  /// Centered framing: floor(T / hop) + 1.
  int frame_count(std::size_t n_samples) const {
    return static_cast<int>(n_samples / static_cast<std::size_t>(hop_length)) + 1;
  }
  /// Longest waveform istft can rebuild from n_frames frames.
  std::size_t max_reconstructable(int n_frames) const;
  void validate() const;
  /// Stable digest of every field; mixing checkpoints across configs is
  /// detected by comparing these.
  std::string fingerprint() const;

  bool operator==(const SpectrogramConfig&) const = default;
};

/// Square root of a periodic Hann window.
std::vector<double> analysis_window(const SpectrogramConfig& config);

using Complex = std::complex<double>;

/// Bin-major complex matrix [n_bins x n_frames].
struct ComplexSpectrogram {
  SpectrogramConfig config;
  int n_bins = 0;
  int n_frames = 0;
  std::vector<Complex> data;
  bool warped = false;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(const SpectrogramConfig& cfg, int frames)
      : config(cfg),
        n_bins(cfg.n_bins()),
        n_frames(frames),
        data(static_cast<std::size_t>(cfg.n_bins()) * frames) {}

  Complex& at(int bin, int frame) {
    return data[static_cast<std::size_t>(bin) * n_frames + frame];
  }
  const Complex& at(int bin, int frame) const {
    return data[static_cast<std::size_t>(bin) * n_frames + frame];
  }
  std::size_t size() const { return data.size(); }
};

ComplexSpectrogram stft(const Waveform& wave, const SpectrogramConfig& config = {});
Waveform istft(const ComplexSpectrogram& spec, std::size_t out_length);

/// Adjoint of stft as a real-linear map from samples to (Re, Im) pairs:
/// given dL/dRe + i dL/dIm per bin, returns dL/dx.
std::vector<double> stft_adjoint(const ComplexSpectrogram& grad,
                                 std::size_t n_samples);

/// z -> sqrt|z| e^{i arg z}.
ComplexSpectrogram warp_magnitude(const ComplexSpectrogram& spec);
/// z -> |z|^2 e^{i arg z}.
ComplexSpectrogram unwarp_magnitude(const ComplexSpectrogram& spec);

/// Element-wise |z|, bin-major.
std::vector<double> magnitude(const ComplexSpectrogram& spec);

}  // namespace vpure::audio
