#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace vpure::audio {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(std::vector<double> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

double peak_abs(std::span<const double> x);
void clip_unit(std::vector<double>& x);

/// Reads 16-bit PCM mono WAV at 16 kHz. Anything else is a format error.
Waveform read_wav(const std::filesystem::path& path);
/// Writes 16-bit PCM mono WAV. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& wave);

/// Returns x / max|reference| together with the scale max|reference|.
std::pair<Waveform, double> normalize_by_peak(const Waveform& x,
                                              const Waveform& reference);

struct ChunkedWaveform {
  std::vector<Waveform> chunks;
  std::size_t original_length = 0;
  /// Valid samples in the last chunk; equals chunk_len when nothing was padded.
  std::size_t tail = 0;
};

ChunkedWaveform chunk_fixed(const Waveform& x, std::size_t chunk_len = 16000);
Waveform concat_chunks(const ChunkedWaveform& chunked);

}  // namespace vpure::audio
