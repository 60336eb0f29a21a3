#include "vpure/audio/stft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>

#include "vpure/common/digest.hpp"
#include "vpure/common/error.hpp"

namespace vpure::audio {
namespace {

struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// The FFTW planner is not thread-safe; execution on new arrays is. Plans are
// created once per size under a lock and then shared. FFTW_ESTIMATE keeps
// the chosen algorithm, and therefore the rounding, identical across runs.
const FftPlans& plans_for(int n) {
  static std::mutex mutex;
  static std::map<int, FftPlans> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> real(n);
  std::vector<Complex> spec(n / 2 + 1);
  FftPlans plans;
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plans.forward = fftw_plan_dft_r2c_1d(
      n, real.data(), reinterpret_cast<fftw_complex*>(spec.data()), flags);
  plans.inverse = fftw_plan_dft_c2r_1d(
      n, reinterpret_cast<fftw_complex*>(spec.data()), real.data(),
      flags | FFTW_DESTROY_INPUT);
  return cache.emplace(n, plans).first->second;
}

std::size_t reflect_index(long offset, std::size_t length) {
  if (length == 1) return 0;
  const long period = 2 * static_cast<long>(length - 1);
  long m = offset % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(length)) m = period - m;
  return static_cast<std::size_t>(m);
}

}  // namespace

std::size_t SpectrogramConfig::max_reconstructable(int n_frames) const {
  if (n_frames <= 0) return 0;
  return static_cast<std::size_t>(n_frames - 1) * hop_length + window_size - pad();
}

void SpectrogramConfig::validate() const {
  if (window_size < 4 || hop_length < 1 || hop_length > window_size) {
    throw Error(ErrorKind::kConfig, "invalid STFT config: window " +
                                        std::to_string(window_size) + ", hop " +
                                        std::to_string(hop_length));
  }
}

std::string SpectrogramConfig::fingerprint() const {
  std::ostringstream os;
  os << "stft;window_size=" << window_size << ";hop_length=" << hop_length
     << ";window=sqrt_hann;n_bins=" << n_bins() << ";center=reflect";
  return sha256_hex(os.str()).substr(0, 16);
}

std::vector<double> analysis_window(const SpectrogramConfig& config) {
  const int n = config.window_size;
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    w[i] = std::sqrt(hann);
  }
  return w;
}

ComplexSpectrogram stft(const Waveform& wave, const SpectrogramConfig& config) {
  config.validate();
  if (wave.empty()) throw invalid_input("stft: empty waveform");
  if (wave.sample_rate != kSampleRate) {
    throw invalid_input("stft: sample rate must be 16000, got " +
                        std::to_string(wave.sample_rate));
  }
  const int n = config.window_size;
  const int pad = config.pad();
  const std::size_t len = wave.size();
  const int frames = config.frame_count(len);
  const auto window = analysis_window(config);
  const auto& plans = plans_for(n);

  ComplexSpectrogram out(config, frames);
  std::vector<double> frame(n);
  std::vector<Complex> bins(config.n_bins());
  for (int f = 0; f < frames; ++f) {
    const long start = static_cast<long>(f) * config.hop_length - pad;
    for (int i = 0; i < n; ++i) {
      frame[i] = window[i] * wave.samples[reflect_index(start + i, len)];
    }
    fftw_execute_dft_r2c(plans.forward, frame.data(),
                         reinterpret_cast<fftw_complex*>(bins.data()));
    for (int b = 0; b < out.n_bins; ++b) out.at(b, f) = bins[b];
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& spec, std::size_t out_length) {
  if (spec.warped) {
    throw Error(ErrorKind::kState, "istft: spectrogram is magnitude-warped");
  }
  const auto& config = spec.config;
  config.validate();
  if (spec.n_bins != config.n_bins()) {
    throw invalid_input("istft: bin count does not match config");
  }
  if (out_length == 0 || out_length > config.max_reconstructable(spec.n_frames)) {
    throw invalid_input("istft: out_length " + std::to_string(out_length) +
                        " exceeds reconstructable span of " +
                        std::to_string(spec.n_frames) + " frames");
  }
  const int n = config.window_size;
  const int pad = config.pad();
  const auto window = analysis_window(config);
  const auto& plans = plans_for(n);

  const std::size_t padded_len =
      static_cast<std::size_t>(spec.n_frames - 1) * config.hop_length + n;
  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> wsum(padded_len, 0.0);
  std::vector<Complex> bins(config.n_bins());
  std::vector<double> frame(n);
  for (int f = 0; f < spec.n_frames; ++f) {
    for (int b = 0; b < spec.n_bins; ++b) bins[b] = spec.at(b, f);
    fftw_execute_dft_c2r(plans.inverse, reinterpret_cast<fftw_complex*>(bins.data()),
                         frame.data());
    const std::size_t start = static_cast<std::size_t>(f) * config.hop_length;
    for (int i = 0; i < n; ++i) {
      acc[start + i] += window[i] * frame[i] / n;
      wsum[start + i] += window[i] * window[i];
    }
  }
  Waveform out;
  out.samples.resize(out_length);
  for (std::size_t i = 0; i < out_length; ++i) {
    const std::size_t p = i + pad;
    out.samples[i] = wsum[p] > 1e-10 ? acc[p] / wsum[p] : 0.0;
  }
  return out;
}

std::vector<double> stft_adjoint(const ComplexSpectrogram& grad,
                                 std::size_t n_samples) {
  const auto& config = grad.config;
  if (n_samples == 0 || config.frame_count(n_samples) != grad.n_frames) {
    throw invalid_input("stft_adjoint: frame count does not match n_samples");
  }
  const int n = config.window_size;
  const int pad = config.pad();
  const auto window = analysis_window(config);
  const auto& plans = plans_for(n);

  std::vector<double> out(n_samples, 0.0);
  std::vector<Complex> bins(config.n_bins());
  std::vector<double> frame(n);
  for (int f = 0; f < grad.n_frames; ++f) {
    for (int b = 0; b < grad.n_bins; ++b) {
      const bool edge = b == 0 || 2 * b == n;
      bins[b] = edge ? grad.at(b, f) : 0.5 * grad.at(b, f);
    }
    fftw_execute_dft_c2r(plans.inverse, reinterpret_cast<fftw_complex*>(bins.data()),
                         frame.data());
    const long start = static_cast<long>(f) * config.hop_length - pad;
    for (int i = 0; i < n; ++i) {
      out[reflect_index(start + i, n_samples)] += window[i] * frame[i];
    }
  }
  return out;
}

ComplexSpectrogram warp_magnitude(const ComplexSpectrogram& spec) {
  if (spec.warped) throw Error(ErrorKind::kState, "spectrogram already warped");
  ComplexSpectrogram out = spec;
  for (auto& z : out.data) {
    const double mag = std::abs(z);
    z = mag > 0.0 ? z / std::sqrt(mag) : Complex{};
  }
  out.warped = true;
  return out;
}

ComplexSpectrogram unwarp_magnitude(const ComplexSpectrogram& spec) {
  if (!spec.warped) throw Error(ErrorKind::kState, "spectrogram is not warped");
  ComplexSpectrogram out = spec;
  for (auto& z : out.data) z *= std::abs(z);
  out.warped = false;
  return out;
}

std::vector<double> magnitude(const ComplexSpectrogram& spec) {
  std::vector<double> out(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) out[i] = std::abs(spec.data[i]);
  return out;
}

}  // namespace vpure::audio
