#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vpure/audio/stft.hpp"
#include "vpure/audio/waveform.hpp"
#include "vpure/phoneme/alignment.hpp"

namespace vpure::phoneme {

struct AlignedUtterance {
  audio::Waveform wave;
  AlignedTranscript transcript;
};

/// Per-phoneme average linear-magnitude spectral column.
struct PhonemeDictionary {
  audio::SpectrogramConfig config;
  std::map<std::string, std::vector<double>> entries;
  std::map<std::string, std::size_t> frame_counts;
  std::vector<double> global_average;

  std::vector<std::string> inventory() const;
  /// UNK and labels without an entry resolve to global_average when
  /// fallback is on; otherwise an unknown label is a lookup error.
  const std::vector<double>& lookup(const std::string& label, bool fallback = true) const;
  std::string fingerprint() const;
};

PhonemeDictionary build_dictionary(std::span<const AlignedUtterance> corpus,
                                   const audio::SpectrogramConfig& config = {},
                                   std::size_t workers = 1);

/// Real matrix [n_bins x n_frames], bin-major, linear magnitude.
struct PhonemeRepresentation {
  int n_bins = 0;
  int n_frames = 0;
  std::vector<double> data;

  double at(int bin, int frame) const {
    return data[static_cast<std::size_t>(bin) * n_frames + frame];
  }
};

PhonemeRepresentation assemble_representation(const AlignedTranscript& transcript,
                                              int n_frames, const PhonemeDictionary& dict,
                                              bool unknown_fallback = true);
/// Every column set to the global average (phoneme guidance ablated).
PhonemeRepresentation global_representation(int n_frames, const PhonemeDictionary& dict);

void save_dictionary(const std::filesystem::path& path, const PhonemeDictionary& dict);
PhonemeDictionary load_dictionary(const std::filesystem::path& path);

}  // namespace vpure::phoneme
