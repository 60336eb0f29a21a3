#include "vpure/pipeline/manifest.hpp"

#include <algorithm>

#include "vpure/common/digest.hpp"
#include "vpure/common/error.hpp"

namespace vpure::pipeline {
namespace fs = std::filesystem;

void RunManifest::add_input(const fs::path& file) {
  inputs.push_back({fs::absolute(file).lexically_normal().string(), sha256_file(file)});
}

void RunManifest::add_output(const fs::path& file) {
  const auto rel = fs::relative(fs::absolute(file), fs::absolute(output_dir));
  if (rel.empty() || *rel.begin() == "..") {
    throw invalid_input("manifest: output " + file.string() + " is outside " + output_dir);
  }
  outputs.push_back({rel.generic_string(), sha256_file(file)});
}

namespace {

nlohmann::json digests_json(const std::vector<FileDigest>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& d : v) a.push_back({{"path", d.path}, {"sha256", d.sha256}});
  return a;
}

std::vector<FileDigest> digests_from(const nlohmann::json& a) {
  std::vector<FileDigest> v;
  for (const auto& d : a) v.push_back({d.at("path"), d.at("sha256")});
  return v;
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
  auto sorted = outputs;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  return {{"format", "vpure-manifest"}, {"version", kVersion},   {"command", command},
          {"args", args},               {"output", output}, {"output_dir", output_dir}, {"config", config},
          {"fingerprints", fingerprints}, {"inputs", digests_json(inputs)},
          {"outputs", digests_json(sorted)}, {"timings", timings}, {"metrics", metrics}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "vpure-manifest") throw format_error("not a run manifest");
    if (j.at("version").get<int>() != kVersion) throw format_error("unsupported manifest version");
    RunManifest m;
    m.command = j.at("command");
    m.args = j.at("args").get<std::vector<std::string>>();
    m.output = j.at("output");
    m.output_dir = j.at("output_dir");
    m.config = j.at("config");
    m.fingerprints = j.at("fingerprints").get<std::map<std::string, std::string>>();
    m.inputs = digests_from(j.at("inputs"));
    m.outputs = digests_from(j.at("outputs"));
    m.timings = j.value("timings", std::map<std::string, double>{});
    m.metrics = j.value("metrics", nlohmann::json::object());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("manifest: ") + e.what());
  }
}

void RunManifest::save(const fs::path& path) const { write_text_file(path, to_json().dump(2) + "\n"); }

RunManifest RunManifest::load(const fs::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error("manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace vpure::pipeline
