#include "stitchlab/serialize.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stitchlab/errors.hpp"

namespace stitchlab::serialize {

uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::string file_hash(const std::string& path) {
  return hex64(fnv1a64(read_file(path)));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out << contents;
  if (!out) throw IoError("short write: " + path);
}

bool file_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

json params_to_json(const nn::NamedParams& params) {
  json j = json::object();
  for (const auto& [name, tensor] : params) {
    json entry;
    entry["shape"] = tensor.shape();
    entry["data"] = tensor.data();
    j[name] = std::move(entry);
  }
  return j;
}

void params_from_json(const json& j, nn::NamedParams& params) {
  for (auto& [name, tensor] : params) {
    if (!j.contains(name)) {
      throw IoError("checkpoint: missing parameter " + name);
    }
    const json& entry = j.at(name);
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape != tensor.shape()) {
      throw IoError("checkpoint: shape mismatch for " + name);
    }
    auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != tensor.size()) {
      throw IoError("checkpoint: data length mismatch for " + name);
    }
    tensor.data() = std::move(data);
  }
}

json adam_to_json(const nn::Adam& opt) {
  json j;
  j["step"] = opt.steps();
  j["m1"] = opt.moment1();
  j["m2"] = opt.moment2();
  return j;
}

void adam_from_json(const json& j, nn::Adam& opt) {
  opt.load_state(j.at("step").get<long long>(),
                 j.at("m1").get<std::vector<std::vector<double>>>(),
                 j.at("m2").get<std::vector<std::vector<double>>>());
}

void save_checkpoint(const std::string& path, const std::string& format,
                     const json& config, const nn::NamedParams& params,
                     const nn::Adam* opt) {
  json j;
  j["format"] = format;
  j["config"] = config;
  j["params"] = params_to_json(params);
  if (opt != nullptr) j["optim"] = adam_to_json(*opt);
  write_file(path, j.dump());
}

LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const std::string& expected_format) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint parse failure in " + path + ": " + e.what());
  }
  LoadedCheckpoint out;
  out.format = j.value("format", "");
  if (out.format != expected_format) {
    throw IoError("checkpoint " + path + " has format '" + out.format +
                  "', expected '" + expected_format + "'");
  }
  out.config = j.at("config");
  out.params = j.at("params");
  out.optim = j.contains("optim") ? j.at("optim") : json();
  return out;
}

}  // namespace stitchlab::serialize
