#include <doctest.h>

#include <set>

#include "modseg/error.hpp"
#include "modseg/phantom.hpp"
#include "modseg/train.hpp"
#include "modseg/viz.hpp"
#include "test_util.hpp"

using namespace modseg;

namespace {

struct VizToy {
  std::vector<Subject> subjects;
  std::unique_ptr<Model> model;

  VizToy() {
    subjects = generate_phantoms(41, 2, 32, 4);
    for (auto& s : subjects) s.volume = normalize(std::move(s.volume));
    NetworkConfig net;
    net.kind = NetKind::MultipathConcat;
    net.base_width = 2;
    net.pathway_width = 2;
    net.depth = 2;
    net.num_modalities = 4;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batches_per_epoch = 5;
    cfg.batch_size = 2;
    cfg.input_side = 20;
    cfg.adam.learning_rate = 1e-3;
    cfg.seed = 13;
    cfg.dropout = DropoutSchedule{0.25, 100, 0.5};
    model = build_model(net, cfg.seed);
    CheckpointMeta meta;
    std::vector<const Subject*> train_set = {&subjects[0]};
    train(*model, train_set, cfg, "", meta);
  }

  std::vector<ModalityMask> masks() const {
    return {ModalityMask::full(4), ModalityMask{{0, 0, 0, 1}}};
  }
};

VizToy& viz_toy() {
  static VizToy toy;
  return toy;
}

}  // namespace

TEST_CASE("extract_features pairs the same voxels across masks") {
  auto& toy = viz_toy();
  std::vector<const Subject*> subjects = {&toy.subjects[1]};
  Rng rng(7);
  const int n_voxels = 40, n_patches = 3;
  const auto samples =
      extract_features(*toy.model, subjects, rng, n_patches, n_voxels, toy.masks(), 20);
  REQUIRE(samples.size() == 2u * n_voxels);

  const int hidden = toy.model->hidden_width();
  CHECK(hidden == 8);  // 4 * pathway_width
  for (const auto& s : samples) CHECK(static_cast<int>(s.feature.size()) == hidden);

  for (int k = 0; k < n_voxels; ++k) {
    const auto& a = samples[static_cast<size_t>(k)];
    const auto& b = samples[static_cast<size_t>(n_voxels + k)];
    CHECK(a.voxel == b.voxel);  // identical voxel ids across masks
    CHECK(a.subject_id == b.subject_id);
    CHECK(a.patch_index == b.patch_index);
    CHECK(a.mask_name == "T1W+T1WC+T2W+FLAIR");
    CHECK(b.mask_name == "FLAIR");
    CHECK(a.true_label == b.true_label);
  }

  // distinct voxels within one mask group
  std::set<std::tuple<int64_t, int64_t, int64_t, int64_t>> seen;
  for (int k = 0; k < n_voxels; ++k) {
    const auto& s = samples[static_cast<size_t>(k)];
    CHECK(seen.insert({s.patch_index, s.voxel[0], s.voxel[1], s.voxel[2]}).second);
  }
}

TEST_CASE("extract_features validates the voxel budget") {
  auto& toy = viz_toy();
  std::vector<const Subject*> subjects = {&toy.subjects[1]};
  Rng rng(8);
  // 2 patches of 4^3 voxels = 128 available
  CHECK_THROWS_AS(
      extract_features(*toy.model, subjects, rng, 2, 129, toy.masks(), 20), Error);
  const auto ok = extract_features(*toy.model, subjects, rng, 2, 128, toy.masks(), 20);
  CHECK(ok.size() == 256);
}

TEST_CASE("feature extraction is deterministic given the rng seed") {
  auto& toy = viz_toy();
  std::vector<const Subject*> subjects = {&toy.subjects[1]};
  Rng r1(9), r2(9);
  const auto a = extract_features(*toy.model, subjects, r1, 2, 10, toy.masks(), 20);
  const auto b = extract_features(*toy.model, subjects, r2, 2, 10, toy.masks(), 20);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].voxel == b[i].voxel);
    CHECK(a[i].feature == b[i].feature);
  }
}

TEST_CASE("render_scatter writes one non-empty panel per highlight value") {
  testutil::TempDir dir("scatter");
  auto& toy = viz_toy();
  std::vector<const Subject*> subjects = {&toy.subjects[1]};
  Rng rng(10);
  std::vector<ModalityMask> masks = {ModalityMask::full(4), ModalityMask{{1, 0, 0, 0}},
                                     ModalityMask{{0, 0, 1, 0}}};
  const auto samples = extract_features(*toy.model, subjects, rng, 2, 30, masks, 20);
  std::vector<std::array<double, 2>> points;
  Rng prng(1);
  for (size_t i = 0; i < samples.size(); ++i)
    points.push_back({prng.normal(), prng.normal()});

  const auto panels = render_scatter(points, samples, Highlight::MaskName, dir.path());
  CHECK(panels.size() == 3);  // one panel per mask
  for (const auto& panel : panels) {
    REQUIRE(std::filesystem::exists(panel));
    const auto bytes = read_file(panel);
    REQUIRE(bytes.size() > 8);
    // PNG signature
    CHECK(bytes[0] == 0x89);
    CHECK(bytes[1] == 'P');
    CHECK(bytes[2] == 'N');
    CHECK(bytes[3] == 'G');
  }

  write_embedding_csv(dir.path() / "embedding.csv", points, samples);
  const std::string csv = read_text_file(dir.path() / "embedding.csv");
  CHECK(csv.find("subject,patch,z,y,x,mask,x_embed,y_embed,pred,true") == 0);
}

TEST_CASE("highlight keys parse and reject unknowns") {
  CHECK(highlight_from_name("predicted_label") == Highlight::PredictedLabel);
  CHECK(highlight_from_name("true_label") == Highlight::TrueLabel);
  CHECK(highlight_from_name("mask_name") == Highlight::MaskName);
  CHECK_THROWS_AS(highlight_from_name("color"), Error);
}

TEST_CASE("png writer produces decodable output") {
  testutil::TempDir dir("png");
  std::vector<uint8_t> rgb(16 * 16 * 3, 200);
  write_png_rgb(dir.path() / "x.png", 16, 16, rgb);
  const auto bytes = read_file(dir.path() / "x.png");
  CHECK(bytes.size() > 50);
  // IHDR follows the signature; IEND closes the file
  CHECK(std::string(bytes.begin() + 12, bytes.begin() + 16) == "IHDR");
  CHECK(std::string(bytes.end() - 8, bytes.end() - 4) == "IEND");
  CHECK_THROWS_AS(write_png_rgb(dir.path() / "bad.png", 16, 16, {1, 2, 3}), Error);
}
