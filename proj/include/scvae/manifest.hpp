#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "scvae/errors.hpp"

namespace scvae {

inline constexpr const char* kArtifactVersion = "1.0.0";

/// FNV-1a 64 over the file's bytes, as 16 lowercase hex digits.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path + " for hashing");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // resolved key/value pairs
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  std::vector<std::string> outputs;
  double seconds = 0.0;
  std::string version = kArtifactVersion;

  void add_input(const std::string& path) { inputs.emplace_back(path, file_digest(path)); }
  void add_output(const std::string& path) { outputs.push_back(path); }
  void set(const std::string& key, const std::string& value) {
    for (auto& kv : config) {
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    }
    config.emplace_back(key, value);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    nlohmann::json cfg = nlohmann::json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    j["seed"] = seed;
    nlohmann::json in = nlohmann::json::array();
    for (const auto& [path, digest] : inputs) in.push_back({{"path", path}, {"fnv1a64", digest}});
    j["inputs"] = in;
    j["outputs"] = outputs;
    j["seconds"] = seconds;
    j["version"] = version;
    return j;
  }

  /// The manifest lists itself among the outputs.
  void write(const std::string& path) {
    if (outputs.empty() || outputs.back() != path) outputs.push_back(path);
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot write manifest " + path);
    out << to_json().dump(2) << "\n";
  }
};

}  // namespace scvae
