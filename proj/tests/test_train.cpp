#include <doctest.h>

#include <cmath>

#include "modseg/error.hpp"
#include "modseg/phantom.hpp"
#include "modseg/train.hpp"
#include "test_util.hpp"

using namespace modseg;

namespace {

struct Toy {
  std::vector<Subject> subjects;
  std::vector<const Subject*> ptrs;
  NetworkConfig net;
  TrainConfig cfg;

  explicit Toy(int n_subjects = 2, uint64_t data_seed = 5) {
    subjects = generate_phantoms(data_seed, n_subjects, 32, 4);
    for (auto& s : subjects) s.volume = normalize(std::move(s.volume));
    ptrs = subject_pointers(subjects);
    net.kind = NetKind::Single;
    net.base_width = 2;
    net.depth = 2;
    net.num_modalities = 4;
    cfg.epochs = 1;
    cfg.batches_per_epoch = 3;
    cfg.batch_size = 2;
    cfg.input_side = 20;
    cfg.adam.learning_rate = 1e-3;
    cfg.seed = 9;
    cfg.checkpoint_every = 0;
  }
};

std::vector<Tensor> snapshot(Model& model) {
  std::vector<Tensor> values;
  for (const Param* p : model.params()) values.push_back(p->value);
  return values;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  Toy toy;
  toy.cfg.adam.learning_rate = 0.0;
  auto model = build_model(toy.net, toy.cfg.seed);
  const auto before = snapshot(*model);
  CheckpointMeta meta;
  train(*model, toy.ptrs, toy.cfg, "", meta);
  const auto& params = model->params();
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i]->buffer) continue;  // batch-norm running statistics do move
    CHECK(testutil::bitwise_equal(params[i]->value, before[i]));
  }
}

TEST_CASE("training is deterministic given seed and config") {
  Toy toy;
  toy.cfg.epochs = 2;
  CheckpointMeta meta;
  auto m1 = build_model(toy.net, toy.cfg.seed);
  const auto r1 = train(*m1, toy.ptrs, toy.cfg, "", meta);
  auto m2 = build_model(toy.net, toy.cfg.seed);
  const auto r2 = train(*m2, toy.ptrs, toy.cfg, "", meta);

  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t e = 0; e < r1.history.size(); ++e)
    CHECK(r1.history[e].mean_loss == r2.history[e].mean_loss);
  for (size_t i = 0; i < m1->params().size(); ++i)
    CHECK(testutil::bitwise_equal(m1->params()[i]->value, m2->params()[i]->value));

  toy.cfg.seed = 10;
  auto m3 = build_model(toy.net, toy.cfg.seed);
  const auto r3 = train(*m3, toy.ptrs, toy.cfg, "", meta);
  CHECK(r3.history.front().mean_loss != r1.history.front().mean_loss);
}

TEST_CASE("epoch accounting consumes exactly the configured patches") {
  Toy toy;
  toy.cfg.epochs = 3;
  toy.cfg.batches_per_epoch = 4;
  toy.cfg.batch_size = 2;
  auto model = build_model(toy.net, toy.cfg.seed);
  CheckpointMeta meta;
  const auto result = train(*model, toy.ptrs, toy.cfg, "", meta);
  CHECK(result.patches_consumed == 3u * 4u * 2u);
  CHECK(result.history.size() == 3);
}

TEST_CASE("loss descends on the learnable toy task over three seeds") {
  Toy toy(3, 21);
  toy.net.base_width = 4;
  toy.cfg.epochs = 4;
  toy.cfg.batches_per_epoch = 20;
  toy.cfg.batch_size = 4;
  for (const uint64_t seed : {1ull, 2ull, 3ull}) {
    toy.cfg.seed = seed;
    auto model = build_model(toy.net, seed);
    CheckpointMeta meta;
    const auto result = train(*model, toy.ptrs, toy.cfg, "", meta);
    CHECK(result.history.back().mean_loss < result.history.front().mean_loss);
  }
}

TEST_CASE("dropout schedule is recorded in the loss history") {
  Toy toy;
  toy.cfg.epochs = 2;
  toy.cfg.dropout = DropoutSchedule{0.125, 1, 0.5};
  auto model = build_model(toy.net, toy.cfg.seed);
  CheckpointMeta meta;
  const auto result = train(*model, toy.ptrs, toy.cfg, "", meta);
  CHECK(result.history[0].p == 0.125);
  CHECK(result.history[1].p == 0.25);
}

TEST_CASE("exploding optimization aborts with a diagnostic") {
  Toy toy;
  toy.cfg.epochs = 5;
  toy.cfg.batches_per_epoch = 10;
  toy.cfg.adam.learning_rate = 1e12;
  auto model = build_model(toy.net, toy.cfg.seed);
  CheckpointMeta meta;
  CHECK_THROWS_WITH_AS(train(*model, toy.ptrs, toy.cfg, "", meta),
                       doctest::Contains("non-finite"), Error);
}

TEST_CASE("training writes checkpoints and loss history") {
  testutil::TempDir dir("train_out");
  Toy toy;
  toy.cfg.epochs = 2;
  toy.cfg.checkpoint_every = 1;
  auto model = build_model(toy.net, toy.cfg.seed);
  CheckpointMeta meta;
  meta.network = toy.net;
  meta.model_name = "unet";
  meta.modality_names = kDefaultModalities;
  const auto result = train(*model, toy.ptrs, toy.cfg, dir.path(), meta);
  CHECK(std::filesystem::exists(dir.path() / "final" / "config.json"));
  CHECK(std::filesystem::exists(dir.path() / "checkpoints" / "epoch_1"));
  CHECK(std::filesystem::exists(dir.path() / "loss_history.csv"));
  CHECK(result.final_checkpoint == dir.path() / "final");

  const auto loaded = load_checkpoint(dir.path() / "final");
  for (size_t i = 0; i < model->params().size(); ++i)
    CHECK(testutil::bitwise_equal(loaded.model->params()[i]->value,
                                  model->params()[i]->value));
}

TEST_CASE("model arity must match the dataset") {
  Toy toy;
  toy.net.num_modalities = 3;
  auto model = build_model(toy.net, 1);
  CheckpointMeta meta;
  CHECK_THROWS_AS(train(*model, toy.ptrs, toy.cfg, "", meta), Error);
}

TEST_CASE("pretraining yields one single-modality model per modality") {
  Toy toy;
  NetworkConfig mp = toy.net;
  mp.kind = NetKind::MultipathConcat;
  mp.pathway_width = 2;
  PretrainPlan plan;
  plan.path_epochs = 1;
  plan.fusion_epochs = 1;
  CheckpointMeta meta;
  const auto paths = pretrain_paths(toy.ptrs, mp, toy.cfg, plan, "", meta);
  REQUIRE(paths.size() == 4);
  for (const auto& path : paths) {
    CHECK(path->input_arity() == 1);
    CHECK(path->config().kind == NetKind::Single);
    CHECK(path->config().base_width == 2);
  }
  // same seeds, same data: pretraining twice reproduces the paths bitwise
  const auto again = pretrain_paths(toy.ptrs, mp, toy.cfg, plan, "", meta);
  for (size_t i = 0; i < paths[0]->params().size(); ++i)
    CHECK(testutil::bitwise_equal(paths[0]->params()[i]->value,
                                  again[0]->params()[i]->value));
}

TEST_CASE("assemble_and_finetune freezes pathways exactly") {
  Toy toy;
  toy.cfg.epochs = 1;
  toy.cfg.batches_per_epoch = 4;
  NetworkConfig mp = toy.net;
  mp.pathway_width = 2;
  PretrainPlan plan;
  plan.path_epochs = 1;
  plan.fusion_epochs = 2;
  CheckpointMeta meta;

  for (const NetKind kind : {NetKind::MultipathConcat, NetKind::MultipathSharedRep}) {
    CAPTURE(net_kind_name(kind));
    mp.kind = kind;
    auto paths = pretrain_paths(toy.ptrs, mp, toy.cfg, plan, "", meta);
    std::vector<Model*> ptrs;
    for (auto& p : paths) ptrs.push_back(p.get());

    auto assembled = assemble_and_finetune(ptrs, toy.ptrs, mp, toy.cfg, plan, "", meta);
    auto* fused = dynamic_cast<MultipathNet*>(assembled.model.get());
    REQUIRE(fused != nullptr);

    for (int i = 0; i < 4; ++i) {
      // backbone parameters equal the pretrained values bitwise
      for (const Param* src : ptrs[static_cast<size_t>(i)]->params()) {
        if (src->name.rfind("body.", 0) != 0) continue;
        const Param* dst = fused->find_param("path" + std::to_string(i) + "." + src->name);
        REQUIRE(dst != nullptr);
        CHECK(testutil::bitwise_equal(src->value, dst->value));
      }
      const Param* src_head = ptrs[static_cast<size_t>(i)]->find_param("head_hidden.w");
      const Param* dst_head = fused->find_param("path" + std::to_string(i) + ".head.w");
      if (kind == NetKind::MultipathConcat) {
        // concat fusion keeps the pretrained hidden heads frozen
        CHECK(testutil::bitwise_equal(src_head->value, dst_head->value));
        CHECK_FALSE(dst_head->trainable);
      } else {
        // shared representation replaces and trains the pathway heads
        CHECK(dst_head->value.shape() != src_head->value.shape());
        CHECK(dst_head->trainable);
      }
    }
  }
}

TEST_CASE("shared-rep fine-tuning trains the replaced pathway heads") {
  Toy toy;
  toy.cfg.batches_per_epoch = 6;
  NetworkConfig mp = toy.net;
  mp.kind = NetKind::MultipathSharedRep;
  mp.pathway_width = 2;
  PretrainPlan plan;
  plan.path_epochs = 1;
  plan.fusion_epochs = 2;
  CheckpointMeta meta;
  auto paths = pretrain_paths(toy.ptrs, mp, toy.cfg, plan, "", meta);
  std::vector<Model*> ptrs;
  for (auto& p : paths) ptrs.push_back(p.get());
  auto assembled = assemble_and_finetune(ptrs, toy.ptrs, mp, toy.cfg, plan, "", meta);

  // a trainable pathway head received gradient during the fusion stage
  bool any_nonzero_grad = false;
  for (const Param* p : assembled.model->params())
    if (p->name.find(".head.") != std::string::npos && p->trainable)
      for (int64_t i = 0; i < p->grad.numel() && !any_nonzero_grad; ++i)
        any_nonzero_grad |= p->grad[i] != 0.0f;
  CHECK(any_nonzero_grad);
}

TEST_CASE("dedicated training restricts arity to the subset") {
  Toy toy;
  const ModalityMask subset = parse_subset("T1WC+FLAIR", kDefaultModalities);
  CheckpointMeta meta;
  auto dedicated = train_dedicated(toy.ptrs, subset, toy.net, toy.cfg, "", meta);
  CHECK(dedicated.model->input_arity() == 2);
  CHECK(dedicated.channel_subset == std::vector<int>{1, 3});
  CHECK(dedicated.result.history.size() == 1);

  // single-modality dedicated model trains without error
  const ModalityMask single = parse_subset("T2W", kDefaultModalities);
  auto mono = train_dedicated(toy.ptrs, single, toy.net, toy.cfg, "", meta);
  CHECK(mono.model->input_arity() == 1);

  // the full subset matches the baseline configuration
  auto full = train_dedicated(toy.ptrs, ModalityMask::full(4), toy.net, toy.cfg, "", meta);
  CHECK(full.model->input_arity() == 4);
  CHECK(full.model->config().kind == NetKind::Single);
}

TEST_CASE("train and pretrain config json round-trips") {
  TrainConfig cfg;
  cfg.epochs = 7;
  cfg.dropout = DropoutSchedule{0.25, 10, 0.5};
  cfg.adam.learning_rate = 3e-4;
  const TrainConfig back = TrainConfig::from_json_string(cfg.to_json_string());
  CHECK(back.epochs == 7);
  CHECK(back.dropout.has_value());
  CHECK(back.dropout->p_initial == 0.25);
  CHECK(back.adam.learning_rate == 3e-4);

  TrainConfig no_dropout;
  no_dropout.dropout.reset();
  CHECK_FALSE(TrainConfig::from_json_string(no_dropout.to_json_string()).dropout.has_value());

  PretrainPlan plan;
  plan.path_epochs = 3;
  CHECK(PretrainPlan::from_json_string(plan.to_json_string()).path_epochs == 3);
}
