#include "modseg/manifest.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>

#include "modseg/io.hpp"

namespace modseg {

using nlohmann::json;

std::string iso_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_artifact(const std::filesystem::path& path) {
  artifact_hashes[path.string()] = fnv1a_file(path);
}

void RunManifest::write(const std::filesystem::path& path) const {
  json j;
  j["command_line"] = command_line;
  j["config"] = config_json.empty() ? json() : json::parse(config_json);
  j["seeds"] = seeds;
  char checksum[32];
  std::snprintf(checksum, sizeof(checksum), "%016llx",
                static_cast<unsigned long long>(data_checksum));
  j["data_checksum"] = checksum;
  j["checkpoints"] = checkpoints;
  json artifacts = json::object();
  for (const auto& [artifact, hash] : artifact_hashes) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    artifacts[artifact] = hex;
  }
  j["artifact_hashes"] = artifacts;
  j["started"] = started;
  j["finished"] = finished;
  write_text_file(path, j.dump(2));
}

}  // namespace modseg
