#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vpure/audio/waveform.hpp"
#include "vpure/phoneme/alignment.hpp"

namespace vpure::pipeline {

/// Harmonic source with a speaker-specific pitch and formant scaling.
struct SyntheticSpeaker {
  std::string id;
  double f0 = 120.0;
  double formant_scale = 1.0;
  /// Spectral tilt in dB per octave above 500 Hz.
  double tilt_db = -6.0;
};

/// Phoneme inventory used by the generator. S is fricative noise.
const std::vector<std::string>& synth_phonemes();

std::vector<SyntheticSpeaker> make_speakers(int count, std::uint64_t seed);

struct SynthClip {
  std::string id;
  std::string speaker;
  audio::Waveform wave;
  phoneme::AlignedTranscript transcript;
};

SynthClip synth_utterance(const SyntheticSpeaker& speaker, std::uint64_t seed,
                          double seconds = 1.0, const std::string& id = {});

/// Coloured noise with a few drifting tones; stands in for a noise corpus.
audio::Waveform synth_noise(std::size_t n_samples, std::uint64_t seed);

struct SynthCorpusSpec {
  int speakers = 2;
  int clips_per_speaker = 20;
  double seconds = 1.0;
  std::uint64_t seed = 0;
};

/// Clips are ordered speaker-major; ids are "<speaker>_<index>".
std::vector<SynthClip> synth_corpus(const SynthCorpusSpec& spec);

}  // namespace vpure::pipeline
