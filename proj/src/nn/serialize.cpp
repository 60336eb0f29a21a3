#include "vpure/nn/serialize.hpp"

#include <cstring>

#include "vpure/common/digest.hpp"
#include "vpure/common/error.hpp"

namespace vpure::nn {

json params_to_json(const std::vector<Param*>& params) {
  json out = json::array();
  for (const auto* p : params) {
    std::vector<std::uint8_t> bytes(p->size() * sizeof(float));
    std::memcpy(bytes.data(), p->value.data(), bytes.size());
    out.push_back({{"name", p->name}, {"shape", p->shape}, {"data", json::binary(std::move(bytes))}});
  }
  return out;
}

void params_from_json(const json& j, const std::vector<Param*>& params) {
  if (!j.is_array() || j.size() != params.size()) {
    throw Error(ErrorKind::kCheckpointMismatch, "parameter count mismatch");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    const auto& entry = j[k];
    if (entry.at("name").get<std::string>() != p.name ||
        entry.at("shape").get<std::vector<int>>() != p.shape) {
      throw Error(ErrorKind::kCheckpointMismatch,
                  "parameter " + p.name + " does not match checkpoint entry " +
                      entry.at("name").get<std::string>());
    }
    const auto& bytes = entry.at("data").get_binary();
    if (bytes.size() != p.size() * sizeof(float)) {
      throw Error(ErrorKind::kCheckpointMismatch, "parameter " + p.name + " has wrong size");
    }
    std::memcpy(p.value.data(), bytes.data(), bytes.size());
  }
}

void write_container(const std::filesystem::path& path, const json& doc) {
  const auto bytes = json::to_cbor(doc);
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

json read_container(const std::filesystem::path& path, const std::string& format,
                    int max_version) {
  const auto raw = read_text_file(path);
  json doc;
  try {
    doc = json::from_cbor(raw);
  } catch (const json::exception& e) {
    throw format_error(path.string() + ": not a checkpoint container (" + e.what() + ")");
  }
  if (!doc.is_object() || doc.value("format", "") != format) {
    throw format_error(path.string() + ": expected a " + format + " container");
  }
  if (doc.value("version", 0) < 1 || doc.value("version", 0) > max_version) {
    throw format_error(path.string() + ": unsupported " + format + " version");
  }
  return doc;
}

}  // namespace vpure::nn
