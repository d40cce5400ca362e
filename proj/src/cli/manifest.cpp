#include "cli/manifest.hpp"

#include <fstream>
#include <sstream>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "dafm/error.hpp"
#include "dafm/fit_io.hpp"

#ifndef DAFM_VERSION
#define DAFM_VERSION "0.0.0"
#endif

namespace dafm::cli {

std::string library_version() { return DAFM_VERSION; }

nlohmann::json manifest_json(const RunRecord& record) {
  nlohmann::json j;
  j["command"] = record.command;
  j["argv"] = record.argv;
  nlohmann::json config = nlohmann::json::object();
  for (const auto& [key, value] : record.config) config[key] = value;
  j["config"] = config;
  j["details"] = record.details;
  j["outputs"] = record.outputs;
  j["wall_seconds"] = record.wall_seconds;
  j["versions"] = {
      {"dafm", library_version()},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
      {"boost", BOOST_LIB_VERSION},
      {"compiler", __VERSION__},
  };
  return j;
}

void write_manifest(const RunRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << manifest_json(record).dump(2) << "\n";
}

std::vector<std::pair<std::string, std::string>> load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<std::pair<std::string, std::string>> out;

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(path.string() + ": invalid JSON: " + e.what());
    }
    const nlohmann::json& cfg = j.contains("config") ? j.at("config") : j;
    if (!cfg.is_object()) throw InvalidArgument(path.string() + ": config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      out.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    return out;
  }
  try {
    for (const auto& [key, value] : parse_key_values(text, path.string())) out.emplace_back(key, value);
  } catch (const DataError& e) {
    throw InvalidArgument(e.what());
  }
  return out;
}

}  // namespace dafm::cli
