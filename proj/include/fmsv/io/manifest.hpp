#pragma once

#include <chrono>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fmsv/errors.hpp"
#include "fmsv/io/config.hpp"
#include "fmsv/version.hpp"

namespace fmsv {

inline std::string iso8601_utc(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// provenance record written next to every command's outputs: the full
// effective config (re-runnable as-is), the seed, and the file inventory.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  ConfigFile config;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;

  void start() { started_at = iso8601_utc(std::chrono::system_clock::now()); }
  void finish() { finished_at = iso8601_utc(std::chrono::system_clock::now()); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["version"] = version_string;
    j["seed"] = seed;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& sec : config.sections()) {
      nlohmann::ordered_json entries = nlohmann::ordered_json::object();
      for (const auto& [key, value] : sec.entries) entries[key] = value;
      cfg[sec.name] = std::move(entries);
    }
    j["config"] = std::move(cfg);
    j["outputs"] = outputs;
    return j;
  }

  // rebuild the config from a manifest written by to_json (section and key
  // order are preserved by the ordered json type, so this is lossless).
  static ConfigFile config_from_json(const nlohmann::ordered_json& j) {
    ConfigFile cfg;
    for (const auto& [section, entries] : j.at("config").items())
      for (const auto& [key, value] : entries.items())
        cfg.set(section, key, value.get<std::string>());
    return cfg;
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << to_json().dump(2) << '\n';
    if (!out) throw DataError("short write to '" + path + "'");
  }
};

}  // namespace fmsv
