#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtc/digest.hpp"
#include "vtc/errors.hpp"
#include "vtc/fileio.hpp"

namespace vtc {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// Record of one CLI run: the resolved config, the seed, hashes of the
/// inputs and a content id per output file.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::string config_hash;
  std::string corpus_hash;  // "-" when the command reads no corpus
  std::vector<std::pair<std::string, std::string>> outputs;  // file name, content id

  /// Hashes `path` and lists it under its file name.
  void add_output(const std::filesystem::path& path) {
    outputs.emplace_back(path.filename().string(), content_id(read_file(path)));
  }
};

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json outputs = nlohmann::json::object();
  for (const auto& [name, id] : m.outputs) outputs[name] = id;
  return {{"schema_version", kManifestSchemaVersion},
          {"tool_version", kToolVersion},
          {"command", m.command},
          {"argv", m.argv},
          {"seed", m.seed},
          {"config", m.config},
          {"config_hash", m.config_hash},
          {"corpus_hash", m.corpus_hash},
          {"outputs", outputs}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    if (j.at("schema_version").get<int>() != kManifestSchemaVersion) {
      throw MigrationError("manifest schema_version " + j.at("schema_version").dump() + " is not supported");
    }
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.corpus_hash = j.at("corpus_hash").get<std::string>();
    for (const auto& [name, id] : j.at("outputs").items()) m.outputs.emplace_back(name, id.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_file_atomic(path, to_json(m).dump(2) + "\n");
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace vtc
