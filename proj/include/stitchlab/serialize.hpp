#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "stitchlab/nn.hpp"

namespace stitchlab::serialize {

using json = nlohmann::ordered_json;

// FNV-1a, used for dataset/model/report fingerprints.
uint64_t fnv1a64(const void* data, std::size_t n);
uint64_t fnv1a64(const std::string& s);
std::string hex64(uint64_t v);
std::string file_hash(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);
bool file_exists(const std::string& path);

// Parameter blobs: {"name": {"shape": [...], "data": [...]}, ...}.
json params_to_json(const nn::NamedParams& params);
// Copies values into the (already constructed) parameter tensors by name.
// Throws IoError on missing names or shape mismatches.
void params_from_json(const json& j, nn::NamedParams& params);

json adam_to_json(const nn::Adam& opt);
void adam_from_json(const json& j, nn::Adam& opt);

// Versioned checkpoint container. `format` names the producing module,
// e.g. "stitchlab.cvae.v1".
void save_checkpoint(const std::string& path, const std::string& format,
                     const json& config, const nn::NamedParams& params,
                     const nn::Adam* opt = nullptr);
struct LoadedCheckpoint {
  std::string format;
  json config;
  json params;
  json optim;  // null when absent
};
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const std::string& expected_format);

}  // namespace stitchlab::serialize
