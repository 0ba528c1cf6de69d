#include "modseg/train.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <iostream>

#include "modseg/error.hpp"
#include "modseg/io.hpp"
#include "modseg/loss.hpp"

namespace modseg {

using nlohmann::json;

std::string TrainConfig::to_json_string() const {
  json j;
  j["epochs"] = epochs;
  j["batches_per_epoch"] = batches_per_epoch;
  j["batch_size"] = batch_size;
  j["adam"] = {{"learning_rate", adam.learning_rate},
               {"beta1", adam.beta1},
               {"beta2", adam.beta2},
               {"epsilon", adam.epsilon}};
  if (dropout)
    j["dropout"] = {{"p_initial", dropout->p_initial},
                    {"doubling_period", dropout->doubling_period},
                    {"p_max", dropout->p_max}};
  else
    j["dropout"] = nullptr;
  j["seed"] = seed;
  j["input_side"] = input_side;
  j["checkpoint_every"] = checkpoint_every;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batches_per_epoch = j.value("batches_per_epoch", cfg.batches_per_epoch);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    cfg.adam.learning_rate = a.value("learning_rate", cfg.adam.learning_rate);
    cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
    cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
    cfg.adam.epsilon = a.value("epsilon", cfg.adam.epsilon);
  }
  if (j.contains("dropout") && !j.at("dropout").is_null()) {
    const json& d = j.at("dropout");
    DropoutSchedule s;
    s.p_initial = d.value("p_initial", s.p_initial);
    s.doubling_period = d.value("doubling_period", s.doubling_period);
    s.p_max = d.value("p_max", s.p_max);
    cfg.dropout = s;
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.input_side = j.value("input_side", cfg.input_side);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  return cfg;
}

std::string PretrainPlan::to_json_string() const {
  json j;
  j["path_epochs"] = path_epochs;
  j["fusion_epochs"] = fusion_epochs;
  j["fusion_dropout_p"] = fusion_dropout_p;
  j["freeze_paths"] = freeze_paths;
  j["replace_pathway_heads"] = replace_pathway_heads;
  return j.dump(2);
}

PretrainPlan PretrainPlan::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  PretrainPlan plan;
  plan.path_epochs = j.value("path_epochs", plan.path_epochs);
  plan.fusion_epochs = j.value("fusion_epochs", plan.fusion_epochs);
  plan.fusion_dropout_p = j.value("fusion_dropout_p", plan.fusion_dropout_p);
  plan.freeze_paths = j.value("freeze_paths", plan.freeze_paths);
  plan.replace_pathway_heads = j.value("replace_pathway_heads", plan.replace_pathway_heads);
  return plan;
}

void write_loss_history(const std::filesystem::path& path,
                        const std::vector<EpochStat>& history) {
  std::string csv = "epoch,mean_loss,p\n";
  char line[128];
  for (const auto& s : history) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", s.epoch, s.mean_loss, s.p);
    csv += line;
  }
  write_text_file(path, csv);
}

BatchData assemble_batch(const std::vector<PatchSampler>& samplers, Rng& rng, int batch_size,
                         const std::vector<int>& channel_subset) {
  require(!samplers.empty(), "assemble_batch: no subjects");
  const int64_t s = samplers.front().input_side();
  const int64_t t = samplers.front().target_side();
  const int full_m = samplers.front().subject().volume.num_modalities();
  std::vector<int> channels = channel_subset;
  if (channels.empty())
    for (int i = 0; i < full_m; ++i) channels.push_back(i);
  const auto arity = static_cast<int64_t>(channels.size());

  BatchData batch;
  batch.x = Tensor({batch_size, arity, s, s, s});
  batch.target_classes.resize(static_cast<size_t>(batch_size) * t * t * t);
  const int64_t chan_v = s * s * s;
  for (int b = 0; b < batch_size; ++b) {
    const auto subject = rng.uniform_int(samplers.size());
    const PatchSample sample = samplers[subject].sample(rng);
    for (int64_t c = 0; c < arity; ++c)
      std::copy(sample.input.data() + channels[static_cast<size_t>(c)] * chan_v,
                sample.input.data() + (channels[static_cast<size_t>(c)] + 1) * chan_v,
                batch.x.data() + (b * arity + c) * chan_v);
    for (int64_t v = 0; v < t * t * t; ++v) {
      const int cls = class_of_label(sample.target[static_cast<size_t>(v)]);
      require(cls >= 0, "unexpected label ", static_cast<int>(sample.target[static_cast<size_t>(v)]));
      batch.target_classes[static_cast<size_t>(b * t * t * t + v)] = static_cast<uint8_t>(cls);
    }
  }
  return batch;
}

TrainResult train(Model& model, const std::vector<const Subject*>& subjects,
                  const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const CheckpointMeta& meta) {
  require(!subjects.empty(), "train: empty training fold");
  require(cfg.epochs >= 1 && cfg.batches_per_epoch >= 1 && cfg.batch_size >= 1,
          "train: bad schedule in config");
  const std::vector<int>& subset = meta.channel_subset;
  const int arity = subset.empty() ? subjects.front()->volume.num_modalities()
                                   : static_cast<int>(subset.size());
  require(arity == model.input_arity(), "model arity ", model.input_arity(),
          " does not match dataset arity ", arity);

  std::vector<PatchSampler> samplers;
  samplers.reserve(subjects.size());
  for (const Subject* subject : subjects)
    samplers.emplace_back(*subject, cfg.input_side, model.config().depth);

  Rng master(cfg.seed);
  Rng sampler_rng = master.split();
  Rng mask_rng = master.split();
  Adam optimizer(cfg.adam);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double p = cfg.dropout ? schedule_p(epoch, *cfg.dropout) : 0.0;
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      BatchData batch = assemble_batch(samplers, sampler_rng, cfg.batch_size, subset);
      const ModalityMask mask = cfg.dropout ? sample_mask(mask_rng, p, model.input_arity())
                                            : ModalityMask::full(model.input_arity());
      Tensor logits = model.forward(batch.x, mask, Mode::Train);
      LossResult loss = softmax_cross_entropy(logits, batch.target_classes);
      require(std::isfinite(loss.loss), "training aborted: non-finite loss ", loss.loss,
              " at epoch ", epoch, ", batch ", b);
      model.zero_grads();
      model.backward(loss.grad_logits);
      optimizer.step(model.params());
      loss_sum += loss.loss;
      result.patches_consumed += static_cast<uint64_t>(cfg.batch_size);
    }
    result.history.push_back({epoch, loss_sum / cfg.batches_per_epoch, p});

    if (!out_dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.epochs) {
      CheckpointMeta m = meta;
      m.epoch = epoch + 1;
      save_checkpoint(out_dir / "checkpoints" / ("epoch_" + std::to_string(epoch + 1)), model,
                      m);
    }
  }

  if (!out_dir.empty()) {
    CheckpointMeta m = meta;
    m.epoch = cfg.epochs;
    result.final_checkpoint = out_dir / "final";
    save_checkpoint(result.final_checkpoint, model, m);
    write_loss_history(out_dir / "loss_history.csv", result.history);
  }
  return result;
}

namespace {

uint64_t derive_seed(uint64_t base, uint64_t stream) {
  return fnv1a(&stream, sizeof(stream), base ^ 0x9e3779b97f4a7c15ull);
}

NetworkConfig pathway_unet_config(const NetworkConfig& multipath_cfg) {
  NetworkConfig cfg = multipath_cfg;
  cfg.kind = NetKind::Single;
  cfg.base_width = multipath_cfg.pathway_width;
  cfg.num_modalities = 1;
  return cfg;
}

}  // namespace

std::vector<std::unique_ptr<Model>> pretrain_paths(
    const std::vector<const Subject*>& subjects, const NetworkConfig& multipath_cfg,
    const TrainConfig& base_cfg, const PretrainPlan& plan,
    const std::filesystem::path& out_dir, const CheckpointMeta& meta) {
  require(multipath_cfg.num_modalities >= 2, "pretraining needs at least two modalities");
  const NetworkConfig path_cfg = pathway_unet_config(multipath_cfg);

  std::vector<std::unique_ptr<Model>> models;
  for (int i = 0; i < multipath_cfg.num_modalities; ++i) {
    TrainConfig cfg = base_cfg;
    cfg.epochs = plan.path_epochs;
    cfg.dropout.reset();  // full supervision on the single modality
    cfg.seed = derive_seed(base_cfg.seed, static_cast<uint64_t>(i) + 1);

    auto model = build_model(path_cfg, cfg.seed);
    CheckpointMeta m = meta;
    m.network = path_cfg;
    m.seed = cfg.seed;
    m.channel_subset = {i};
    m.model_name = meta.model_name + "_path" + std::to_string(i);
    const auto dir = out_dir.empty() ? out_dir : out_dir / ("path" + std::to_string(i));
    train(*model, subjects, cfg, dir, m);
    models.push_back(std::move(model));
  }
  return models;
}

AssembledModel assemble_and_finetune(const std::vector<Model*>& path_models,
                                     const std::vector<const Subject*>& subjects,
                                     const NetworkConfig& multipath_cfg,
                                     const TrainConfig& base_cfg, const PretrainPlan& plan,
                                     const std::filesystem::path& out_dir,
                                     const CheckpointMeta& meta) {
  require(multipath_cfg.is_multipath(), "assemble_and_finetune needs a multipath kind");
  require(static_cast<int>(path_models.size()) == multipath_cfg.num_modalities,
          "need one pretrained path per modality: got ", path_models.size(), " for M=",
          multipath_cfg.num_modalities);

  const uint64_t fuse_seed = derive_seed(base_cfg.seed, 0xf05e);
  auto model_base = build_model(multipath_cfg, fuse_seed);
  auto* model = dynamic_cast<MultipathNet*>(model_base.get());
  for (int i = 0; i < multipath_cfg.num_modalities; ++i)
    model->load_pathway_from(i, *path_models[static_cast<size_t>(i)]);

  const bool replace_heads =
      multipath_cfg.kind == NetKind::MultipathSharedRep && plan.replace_pathway_heads;
  if (plan.freeze_paths) model->freeze_pathways(/*freeze_heads=*/!replace_heads);
  if (replace_heads) {
    Rng head_rng(derive_seed(base_cfg.seed, 0x6ead));
    model->reinit_pathway_heads(head_rng);
  }

  // Snapshot of the frozen parameters; they must come back bit-identical.
  std::vector<std::pair<std::string, Tensor>> frozen;
  for (const Param* p : model->params())
    if (!p->trainable && !p->buffer) frozen.emplace_back(p->name, p->value);

  TrainConfig cfg = base_cfg;
  cfg.epochs = plan.fusion_epochs;
  cfg.seed = derive_seed(base_cfg.seed, 0xff);
  cfg.dropout = DropoutSchedule{plan.fusion_dropout_p, 1000000, plan.fusion_dropout_p};

  CheckpointMeta m = meta;
  m.network = multipath_cfg;
  m.seed = cfg.seed;

  AssembledModel out;
  out.result = train(*model, subjects, cfg, out_dir, m);

  for (const auto& [name, value] : frozen) {
    const Param* p = model->find_param(name);
    const float* a = value.data();
    const float* b = p->value.data();
    for (int64_t j = 0; j < value.numel(); ++j)
      require(a[j] == b[j], "frozen parameter ", name, " changed during fine-tuning");
  }

  out.model = std::move(model_base);
  return out;
}

DedicatedModel train_dedicated(const std::vector<const Subject*>& subjects,
                               const ModalityMask& subset, const NetworkConfig& base_cfg,
                               const TrainConfig& cfg, const std::filesystem::path& out_dir,
                               const CheckpointMeta& meta) {
  require(!subset.empty(), "dedicated training needs a non-empty subset");
  NetworkConfig net_cfg = base_cfg;
  net_cfg.kind = NetKind::Single;
  net_cfg.num_modalities = subset.m_present();

  std::vector<int> channels;
  for (int i = 0; i < subset.m_total(); ++i)
    if (subset.is_present(i)) channels.push_back(i);

  TrainConfig train_cfg = cfg;
  train_cfg.dropout.reset();  // dedicated models see their subset in full

  DedicatedModel out;
  out.channel_subset = channels;
  out.model = build_model(net_cfg, train_cfg.seed);
  CheckpointMeta m = meta;
  m.network = net_cfg;
  m.channel_subset = channels;
  out.result = train(*out.model, subjects, train_cfg, out_dir, m);
  return out;
}

std::vector<const Subject*> subject_pointers(const std::vector<Subject>& subjects) {
  std::vector<const Subject*> out;
  out.reserve(subjects.size());
  for (const Subject& s : subjects) out.push_back(&s);
  return out;
}

std::vector<const Subject*> select_subjects(const std::vector<Subject>& subjects,
                                            const std::vector<std::string>& ids) {
  std::vector<const Subject*> out;
  for (const std::string& id : ids) {
    const Subject* found = nullptr;
    for (const Subject& s : subjects)
      if (s.id() == id) {
        found = &s;
        break;
      }
    require(found != nullptr, "subject '", id, "' not present in dataset");
    out.push_back(found);
  }
  return out;
}

}  // namespace modseg
