#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace modseg {

// One manifest per training/eval run; enough to re-execute deterministically.
struct RunManifest {
  std::string command_line;
  std::string config_json;  // fully resolved configuration
  std::vector<uint64_t> seeds;
  uint64_t data_checksum = 0;
  std::vector<std::string> checkpoints;
  std::map<std::string, uint64_t> artifact_hashes;
  std::string started;
  std::string finished;

  void add_artifact(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

std::string iso_timestamp_now();

}  // namespace modseg
