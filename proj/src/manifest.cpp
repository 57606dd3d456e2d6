#include "qfluct/manifest.hpp"

#include <cstdio>

#include "qfluct/errors.hpp"
#include "qfluct/tabular.hpp"

namespace qfluct {

std::string file_digest(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
  return std::string(buf);
}

nlohmann::json manifest_to_json(const RunManifest& manifest) {
  nlohmann::json j;
  j["config_hash"] = manifest.config_hash;
  j["tool_version"] = manifest.tool_version;
  j["seed"] = manifest.seed;
  j["ok"] = manifest.ok;
  j["stages"] = nlohmann::json::array();
  for (const StageRecord& s : manifest.stages) {
    nlohmann::json e;
    e["name"] = s.name;
    e["inputs"] = s.inputs;
    e["outputs"] = s.outputs;
    e["wall_ms"] = s.wall_ms;
    e["warnings"] = s.warnings;
    e["ok"] = s.ok;
    j["stages"].push_back(e);
  }
  return j;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  write_text_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

}  // namespace qfluct
