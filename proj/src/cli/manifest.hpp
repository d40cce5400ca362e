#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace dafm::cli {

/// Everything needed to rerun a command: its name and resolved options.
struct RunRecord {
  std::string command;
  std::vector<std::string> argv;
  std::vector<std::pair<std::string, std::string>> config;  // option name -> resolved value
  nlohmann::json details = nlohmann::json::object();       // seeds and command-specific facts
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
};

std::string library_version();

nlohmann::json manifest_json(const RunRecord& record);

/// Writes `manifest.json` into dir.
void write_manifest(const RunRecord& record, const std::filesystem::path& dir);

/// Reads a config file: either "key = value" lines or a JSON object (a
/// manifest's "config" member is used when present). Keys are option names
/// without leading dashes.
std::vector<std::pair<std::string, std::string>> load_config_file(const std::filesystem::path& path);

}  // namespace dafm::cli
