#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "modseg/checkpoint.hpp"
#include "modseg/missingness.hpp"
#include "modseg/nets.hpp"
#include "modseg/optim.hpp"
#include "modseg/sampling.hpp"

namespace modseg {

struct TrainConfig {
  int epochs = 150;
  int batches_per_epoch = 100;
  int batch_size = 4;
  AdamConfig adam;
  std::optional<DropoutSchedule> dropout;  // unset: no modality dropout
  uint64_t seed = 1;
  int input_side = 108;
  int checkpoint_every = 25;

  std::string to_json_string() const;
  static TrainConfig from_json_string(const std::string& text);
};

struct PretrainPlan {
  int path_epochs = 100;
  int fusion_epochs = 100;
  double fusion_dropout_p = 0.5;
  bool freeze_paths = true;
  bool replace_pathway_heads = true;  // applies to shared-representation fusion

  std::string to_json_string() const;
  static PretrainPlan from_json_string(const std::string& text);
};

struct EpochStat {
  int epoch = 0;
  double mean_loss = 0.0;
  double p = 0.0;  // dropout probability in effect
};

struct TrainResult {
  std::vector<EpochStat> history;
  uint64_t patches_consumed = 0;
  std::filesystem::path final_checkpoint;  // empty when no out_dir was given
};

void write_loss_history(const std::filesystem::path& path,
                        const std::vector<EpochStat>& history);

// Sampled patches restricted to the subset channels (empty = all).
struct BatchData {
  Tensor x;                             // [B, arity, s, s, s]
  std::vector<uint8_t> target_classes;  // B * t^3
};
BatchData assemble_batch(const std::vector<PatchSampler>& samplers, Rng& rng, int batch_size,
                         const std::vector<int>& channel_subset);

// Optimizes `model` on patches sampled from `subjects`. When the config has
// a dropout schedule, one mask per batch is sampled with p = schedule_p(epoch)
// and applied at the model's masking point. Checkpoints land under
// out_dir/checkpoints plus out_dir/final when out_dir is non-empty.
TrainResult train(Model& model, const std::vector<const Subject*>& subjects,
                  const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const CheckpointMeta& meta);

// One single-modality UNet per modality, trained with full supervision on
// its own channel.
std::vector<std::unique_ptr<Model>> pretrain_paths(
    const std::vector<const Subject*>& subjects, const NetworkConfig& multipath_cfg,
    const TrainConfig& base_cfg, const PretrainPlan& plan,
    const std::filesystem::path& out_dir, const CheckpointMeta& meta);

// Builds the multipath network from pretrained paths, freezes them (for
// shared-representation fusion the pathway heads are re-initialized and stay
// trainable), and trains fusion + prediction layers at constant dropout p.
struct AssembledModel {
  std::unique_ptr<Model> model;
  TrainResult result;
};
AssembledModel assemble_and_finetune(const std::vector<Model*>& path_models,
                                     const std::vector<const Subject*>& subjects,
                                     const NetworkConfig& multipath_cfg,
                                     const TrainConfig& base_cfg, const PretrainPlan& plan,
                                     const std::filesystem::path& out_dir,
                                     const CheckpointMeta& meta);

// Single UNet with input arity |subset| trained on exactly those channels.
struct DedicatedModel {
  std::unique_ptr<Model> model;
  TrainResult result;
  std::vector<int> channel_subset;
};
DedicatedModel train_dedicated(const std::vector<const Subject*>& subjects,
                               const ModalityMask& subset, const NetworkConfig& base_cfg,
                               const TrainConfig& cfg, const std::filesystem::path& out_dir,
                               const CheckpointMeta& meta);

std::vector<const Subject*> subject_pointers(const std::vector<Subject>& subjects);
std::vector<const Subject*> select_subjects(const std::vector<Subject>& subjects,
                                            const std::vector<std::string>& ids);

}  // namespace modseg
