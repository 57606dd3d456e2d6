#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace qfluct {

inline constexpr const char* kToolVersion = "qfluct 0.1.0";

// Provenance for one pipeline stage: content digests of everything read
// and written, so two runs can be compared file by file. Wall-clock time
// is informational and excluded from any determinism comparison.
struct StageRecord {
  std::string name;
  std::map<std::string, std::string> inputs;   // path -> digest
  std::map<std::string, std::string> outputs;  // path -> digest
  double wall_ms = 0.0;
  std::vector<std::string> warnings;
  bool ok = true;
};

struct RunManifest {
  std::string config_hash;
  std::string tool_version = kToolVersion;
  uint64_t seed = 0;
  std::vector<StageRecord> stages;
  bool ok = true;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// Hex content digest of a file; missing files raise DataError.
std::string file_digest(const std::filesystem::path& path);

}  // namespace qfluct
