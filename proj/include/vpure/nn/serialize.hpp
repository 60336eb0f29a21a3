#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vpure/nn/tensor.hpp"

namespace vpure::nn {

using json = nlohmann::json;

json params_to_json(const std::vector<Param*>& params);
/// Fails with a checkpoint-mismatch error on any name or shape difference.
void params_from_json(const json& j, const std::vector<Param*>& params);

/// Checkpoint containers are CBOR documents carrying "format" and "version".
void write_container(const std::filesystem::path& path, const json& doc);
json read_container(const std::filesystem::path& path, const std::string& format,
                    int max_version);

}  // namespace vpure::nn
