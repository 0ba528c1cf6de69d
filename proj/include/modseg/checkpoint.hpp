#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "modseg/nets.hpp"

namespace modseg {

struct CheckpointMeta {
  NetworkConfig network;
  uint64_t seed = 0;
  int epoch = 0;
  std::string model_name;
  std::vector<std::string> modality_names;
  std::vector<std::string> train_subject_ids;
  int fold_id = -1;
  std::vector<int> channel_subset;  // dedicated models: source modality indices

  std::string to_json_string() const;
  static CheckpointMeta from_json_string(const std::string& text);
};

// A checkpoint directory holds config.json plus one binary tensor file per
// named parameter (params/<name>.bin, little-endian float32).
void save_checkpoint(const std::filesystem::path& dir, Model& model,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// Loads parameter tensors from `dir` into an already-built model.
void load_params_into(const std::filesystem::path& dir, Model& model);

}  // namespace modseg
