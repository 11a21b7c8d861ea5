#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pkground {

struct RunManifest {
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::map<std::string, std::string> input_digests;  ///< path -> sha256 hex
  std::vector<std::string> backends;
  std::string tool_version = PKGROUND_VERSION;
  std::string started_at;
  std::string finished_at;

  void add_input(const std::string& path);
  nlohmann::ordered_json to_json() const;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

/// UTC ISO-8601 time. Honors SOURCE_DATE_EPOCH so reruns can be byte-identical.
std::string timestamp_now();

/// Writes `<output>.manifest.json`.
void write_manifest(const RunManifest& manifest, const std::string& output_path);

}  // namespace pkground
