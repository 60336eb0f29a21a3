#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace vpure::pipeline {

struct FileDigest {
  /// Relative to the run's output directory for outputs; absolute for inputs.
  std::string path;
  std::string sha256;
};

/// Record of one CLI invocation: enough to re-run it and to check that the
/// re-run wrote the same bytes.
struct RunManifest {
  static constexpr int kVersion = 1;

  std::string command;
  /// Arguments after the command name, with paths made absolute.
  std::vector<std::string> args;
  /// Value given to -o. Outputs are listed relative to output_dir, which is
  /// `output` itself for directory outputs and its parent otherwise.
  std::string output;
  std::string output_dir;
  nlohmann::json config = nlohmann::json::object();
  /// Checkpoint / dictionary / config fingerprints.
  std::map<std::string, std::string> fingerprints;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  /// Wall-clock seconds per stage. Not part of the reproducibility check.
  std::map<std::string, double> timings;
  nlohmann::json metrics = nlohmann::json::object();

  void add_input(const std::filesystem::path& file);
  /// `file` must lie inside output_dir.
  void add_output(const std::filesystem::path& file);

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

inline constexpr const char* kManifestName = "manifest.json";

}  // namespace vpure::pipeline
