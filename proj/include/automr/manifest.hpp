#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "automr/binio.hpp"
#include "automr/version.hpp"

namespace automr {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Describes one command invocation. Written when the command starts and
// rewritten (atomically) when it ends.
struct RunManifest {
  std::vector<std::string> command_line;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> artifacts;
  std::string version = kVersion;
  std::string started;
  std::string finished;
  std::string status = "running";
  int exit_code = -1;
  std::string error;
};

inline void to_json(nlohmann::json& j, const RunManifest& m) {
  j = {{"command_line", m.command_line}, {"config", m.config},   {"seeds", m.seeds},
       {"artifacts", m.artifacts},       {"version", m.version}, {"started", m.started},
       {"finished", m.finished},         {"status", m.status},   {"exit_code", m.exit_code}};
  if (!m.error.empty()) j["error"] = m.error;
}

inline void from_json(const nlohmann::json& j, RunManifest& m) {
  j.at("command_line").get_to(m.command_line);
  m.config = j.at("config");
  j.at("seeds").get_to(m.seeds);
  j.at("artifacts").get_to(m.artifacts);
  j.at("version").get_to(m.version);
  j.at("started").get_to(m.started);
  j.at("finished").get_to(m.finished);
  j.at("status").get_to(m.status);
  j.at("exit_code").get_to(m.exit_code);
  m.error = j.value("error", "");
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  binio::write_atomically(path, [&](std::ostream& out) { out << nlohmann::json(m).dump(2) << '\n'; });
}

}  // namespace automr
