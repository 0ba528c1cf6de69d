#include "modseg/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "modseg/error.hpp"
#include "modseg/io.hpp"

namespace modseg {

using nlohmann::json;

std::string CheckpointMeta::to_json_string() const {
  json j;
  j["network"] = json::parse(network.to_json_string());
  j["seed"] = seed;
  j["epoch"] = epoch;
  j["model_name"] = model_name;
  j["modality_names"] = modality_names;
  j["train_subject_ids"] = train_subject_ids;
  j["fold_id"] = fold_id;
  j["channel_subset"] = channel_subset;
  return j.dump(2);
}

CheckpointMeta CheckpointMeta::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  CheckpointMeta meta;
  meta.network = NetworkConfig::from_json_string(j.at("network").dump());
  meta.seed = j.value("seed", 0ull);
  meta.epoch = j.value("epoch", 0);
  meta.model_name = j.value("model_name", std::string());
  meta.modality_names = j.value("modality_names", std::vector<std::string>());
  meta.train_subject_ids = j.value("train_subject_ids", std::vector<std::string>());
  meta.fold_id = j.value("fold_id", -1);
  meta.channel_subset = j.value("channel_subset", std::vector<int>());
  return meta;
}

void save_checkpoint(const std::filesystem::path& dir, Model& model,
                     const CheckpointMeta& meta) {
  std::filesystem::create_directories(dir / "params");
  write_text_file(dir / "config.json", meta.to_json_string());
  for (const Param* p : model.params())
    write_tensor_f32(dir / "params" / (p->name + ".bin"), p->value);
}

void load_params_into(const std::filesystem::path& dir, Model& model) {
  for (Param* p : model.params()) {
    const auto path = dir / "params" / (p->name + ".bin");
    require(std::filesystem::exists(path), "checkpoint ", dir.string(),
            " is missing parameter file ", p->name, ".bin");
    Tensor t = read_tensor_f32(path);
    require(t.same_shape(p->value), "checkpoint parameter ", p->name, " has shape ",
            t.shape_str(), ", expected ", p->value.shape_str());
    p->value = std::move(t);
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto config_path = dir / "config.json";
  require(std::filesystem::exists(config_path), "no checkpoint at ", dir.string(),
          " (config.json missing)");
  LoadedCheckpoint out;
  out.meta = CheckpointMeta::from_json_string(read_text_file(config_path));
  out.model = build_model(out.meta.network, out.meta.seed);
  load_params_into(dir, *out.model);
  return out;
}

}  // namespace modseg
