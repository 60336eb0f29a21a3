#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vpure/audio/stft.hpp"

namespace vpure::phoneme {

inline const std::string kSilence = "SIL";
inline const std::string kUnknown = "UNK";

struct PhonemeInterval {
  std::string label;
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds
};

struct AlignedTranscript {
  std::vector<PhonemeInterval> intervals;
  double audio_duration = 0.0;
};

/// Sorts, rejects overlaps and negative times, and fills every gap in
/// [0, duration] with SIL. A negative duration means "use the last end".
AlignedTranscript normalize_transcript(std::vector<PhonemeInterval> intervals,
                                       double duration = -1.0);

/// Accepts a bare array of {label,start,end} objects, an object with
/// "duration" and "intervals", or parallel "label"/"start"/"end" arrays.
AlignedTranscript parse_alignment_json(std::string_view text);
/// Long-form TextGrid; reads the "phones" interval tier, else the first one.
AlignedTranscript parse_textgrid(std::string_view text);
/// Dispatches on extension (.TextGrid / .json).
AlignedTranscript parse_alignment(const std::filesystem::path& path);

std::string to_json_text(const AlignedTranscript& transcript);

struct FrameRange {
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end > begin ? end - begin : 0; }
};

/// Frames whose centre time i*hop/16000 lies in [start, end).
FrameRange frames_for_interval(const PhonemeInterval& interval,
                               const audio::SpectrogramConfig& config, int n_frames);

/// One label per frame. The final interval is closed on the right so the
/// frame centred exactly at the end of the audio is not orphaned; frames
/// past the transcript fall back to SIL.
std::vector<std::string> frame_labels(const AlignedTranscript& transcript,
                                      const audio::SpectrogramConfig& config, int n_frames);

}  // namespace vpure::phoneme
