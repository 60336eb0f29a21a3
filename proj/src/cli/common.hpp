#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vpure/audio/waveform.hpp"
#include "vpure/diffusion/purifier.hpp"
#include "vpure/phoneme/alignment.hpp"
#include "vpure/phoneme/dictionary.hpp"
#include "vpure/pipeline/config.hpp"
#include "vpure/pipeline/manifest.hpp"
#include "vpure/protect/encoder.hpp"
#include "vpure/refiner/refiner.hpp"

namespace vpure::cli {

namespace fs = std::filesystem;

struct Context {
  pipeline::PipelineConfig config;
  pipeline::RunManifest manifest;
  std::ostream* out = nullptr;

  /// Sets the output location; `is_dir` creates the directory.
  void set_output(const fs::path& o, bool is_dir);
  fs::path output() const { return manifest.output; }
  void add_input(const fs::path& p) { manifest.add_input(p); }
  void add_output(const fs::path& p) { manifest.add_output(p); }
  /// Writes text and records it as an output.
  void write_output(const fs::path& p, const std::string& text);
  void write_wav_output(const fs::path& p, const audio::Waveform& w);
  fs::path manifest_path() const;

  std::size_t workers() const { return config.workers; }
};

/// Records wall time for one stage in the manifest.
class StageTimer {
 public:
  StageTimer(Context& ctx, std::string stage);
  ~StageTimer();

 private:
  Context& ctx_;
  std::string stage_;
  std::chrono::steady_clock::time_point t0_;
};

struct ClipFile {
  std::string id;
  fs::path path;
};

/// A directory yields its *.wav files sorted by name; a file yields itself.
std::vector<ClipFile> list_wavs(const fs::path& p);
/// Reads every clip and records it as an input.
std::vector<audio::Waveform> read_clips(Context& ctx, const std::vector<ClipFile>& files);
/// Speaker label: the clip id up to its first underscore.
std::string speaker_of(const std::string& id);
/// <dir>/<id>.json or <dir>/<id>.TextGrid.
phoneme::AlignedTranscript load_alignment(Context& ctx, const fs::path& dir, const std::string& id);
std::map<std::string, audio::Waveform> load_enrollment(Context& ctx, const fs::path& dir);

struct LoadedPurifier {
  diffusion::WaveDenoiser model;
  diffusion::NoiseSchedule schedule;
};
LoadedPurifier load_purifier_checked(Context& ctx, const fs::path& path);
refiner::RefinerCheckpoint load_refiner_checked(Context& ctx, const fs::path& path,
                                                const phoneme::PhonemeDictionary& dict);
phoneme::PhonemeDictionary load_dictionary_checked(Context& ctx, const fs::path& path);
protect::ToySpeakerEncoder load_encoder_checked(Context& ctx, const fs::path& path);

/// Verification threshold: explicit value, else the EER threshold of a
/// genuine/impostor score file, else the configured default.
double resolve_threshold(Context& ctx, std::optional<double> threshold,
                         const std::string& eer_from);

using Action = std::function<void(Context&)>;

void add_data_commands(CLI::App& app, Action& action);
void add_training_commands(CLI::App& app, Action& action);
void add_processing_commands(CLI::App& app, Action& action);
void add_report_commands(CLI::App& app, Action& action);

}  // namespace vpure::cli
