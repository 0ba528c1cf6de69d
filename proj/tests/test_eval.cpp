#include <doctest.h>

#include <set>

#include "modseg/error.hpp"
#include "modseg/eval.hpp"
#include "modseg/phantom.hpp"
#include "modseg/train.hpp"
#include "test_util.hpp"

using namespace modseg;

namespace {

RegionMask make_mask(std::vector<uint8_t> bits, int64_t side = 2) {
  RegionMask m;
  m.region = Region::WholeTumor;
  m.dz = m.dy = m.dx = side;
  m.mask = std::move(bits);
  return m;
}

// tiny trained model shared by the prediction tests
struct TrainedToy {
  std::vector<Subject> subjects;
  std::unique_ptr<Model> model;

  TrainedToy() {
    subjects = generate_phantoms(31, 3, 32, 4);
    for (auto& s : subjects) s.volume = normalize(std::move(s.volume));
    NetworkConfig net;
    net.kind = NetKind::Single;
    net.base_width = 4;
    net.depth = 2;
    net.num_modalities = 4;
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batches_per_epoch = 20;
    cfg.batch_size = 4;
    cfg.input_side = 20;
    cfg.adam.learning_rate = 1e-3;
    cfg.seed = 3;
    model = build_model(net, cfg.seed);
    CheckpointMeta meta;
    std::vector<const Subject*> train_set = {&subjects[0], &subjects[1]};
    train(*model, train_set, cfg, "", meta);
  }
};

TrainedToy& trained_toy() {
  static TrainedToy toy;
  return toy;
}

}  // namespace

TEST_CASE("dice on the declared examples") {
  const auto a = make_mask({1, 1, 0, 0, 0, 0, 0, 0});
  const auto b = make_mask({0, 0, 1, 1, 0, 0, 0, 0});
  const auto c = make_mask({1, 0, 1, 0, 0, 0, 0, 0});
  const auto empty = make_mask({0, 0, 0, 0, 0, 0, 0, 0});
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, b) == 0.0);
  CHECK(dice(a, c) == 0.5);  // |P|=2, |T|=2, |P∩T|=1
  CHECK(dice(empty, empty) == 1.0);
  CHECK(dice(a, empty) == 0.0);
}

TEST_CASE("dice is symmetric and bounded on random masks") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<uint8_t> pa(27), pb(27);
    for (auto& v : pa) v = rng.bernoulli(0.3) ? 1 : 0;
    for (auto& v : pb) v = rng.bernoulli(0.3) ? 1 : 0;
    const auto a = make_mask(pa, 3), b = make_mask(pb, 3);
    const double ab = dice(a, b);
    CHECK(ab == dice(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    if (a.count() > 0) CHECK(dice(a, a) == 1.0);
  }
}

TEST_CASE("dice rejects shape mismatches") {
  const auto a = make_mask({1, 0, 0, 0, 0, 0, 0, 0}, 2);
  auto b = make_mask(std::vector<uint8_t>(27, 0), 3);
  CHECK_THROWS_AS(dice(a, b), Error);
}

TEST_CASE("tile origins cover the extent without overlap") {
  for (const auto& [extent, tile] : std::vector<std::pair<int64_t, int64_t>>{
           {32, 12}, {32, 32}, {7, 3}, {20, 20}, {64, 36}}) {
    const auto origins = tile_origins(extent, tile);
    std::vector<int> covered(static_cast<size_t>(extent), 0);
    for (const int64_t o : origins)
      for (int64_t v = o; v < std::min(extent, o + tile); ++v)
        covered[static_cast<size_t>(v)] += 1;
    for (const int c : covered) CHECK(c == 1);
  }
}

TEST_CASE("sliding window predicts every voxel with a valid label") {
  auto& toy = trained_toy();
  const Subject& test = toy.subjects[2];
  const LabelVolume pred =
      sliding_window_predict(*toy.model, test.volume, ModalityMask::full(4), 28);
  CHECK(pred.dz == 32);
  CHECK(pred.labels.size() == 32u * 32u * 32u);
  for (const uint8_t l : pred.labels) CHECK((l == 0 || l == 1 || l == 2 || l == 4));
}

TEST_CASE("tiled prediction equals the giant-patch prediction away from tile seams") {
  // input 48 at depth 2 emits a 32^3 tile: the whole volume in one patch
  auto& toy = trained_toy();
  const Subject& test = toy.subjects[2];
  const LabelVolume tiled =
      sliding_window_predict(*toy.model, test.volume, ModalityMask::full(4), 28);
  const LabelVolume giant =
      sliding_window_predict(*toy.model, test.volume, ModalityMask::full(4), 48);

  // seams of the t=12 grid sit at 0, 12, 24, 32; the upsampling clamp can
  // flip only a one-voxel shell, so everything at distance >= 2 must agree
  auto seam_distance = [](int64_t v) {
    int64_t best = 1000;
    for (const int64_t b : {0, 12, 24, 32})
      best = std::min<int64_t>(best, std::min(std::abs(v - b), std::abs(v + 1 - b)));
    return best;
  };
  int64_t checked = 0, agree_all = 0, total_agree = 0;
  for (int64_t z = 0; z < 32; ++z)
    for (int64_t y = 0; y < 32; ++y)
      for (int64_t x = 0; x < 32; ++x) {
        const bool same = tiled.at(z, y, x) == giant.at(z, y, x);
        total_agree += same;
        if (std::min({seam_distance(z), seam_distance(y), seam_distance(x)}) >= 2) {
          ++checked;
          agree_all += same;
        }
      }
  CHECK(checked > 6000);
  CHECK(agree_all == checked);  // exact equality on the interior
  CHECK(static_cast<double>(total_agree) / (32 * 32 * 32) > 0.97);
}

TEST_CASE("prediction on an all-background volume is predominantly background") {
  auto& toy = trained_toy();
  MultiModalVolume zeros;
  zeros.subject_id = "zeros";
  zeros.voxels = Tensor({4, 32, 32, 32});
  const LabelVolume pred =
      sliding_window_predict(*toy.model, zeros, ModalityMask::full(4), 28);
  int64_t background = 0;
  for (const uint8_t l : pred.labels) background += l == 0;
  CHECK(static_cast<double>(background) / pred.labels.size() > 0.9);
}

TEST_CASE("sliding window rejects arity mismatches") {
  auto& toy = trained_toy();
  const Subject& test = toy.subjects[2];
  CHECK_THROWS_AS(
      sliding_window_predict(*toy.model, test.volume, ModalityMask::full(3), 28), Error);
  ModalityMask empty{{0, 0, 0, 0}};
  CHECK_THROWS_AS(sliding_window_predict(*toy.model, test.volume, empty, 28), Error);
}

TEST_CASE("evaluate_subsets sweeps subsets x regions and is deterministic") {
  auto& toy = trained_toy();
  std::vector<const Subject*> test_set = {&toy.subjects[2]};
  const auto subsets = enumerate_subsets(4);
  EvalOptions opt;
  opt.input_side = 28;
  const DiceReport report = evaluate_subsets(*toy.model, "unet", test_set, subsets,
                                             {"phantom_000", "phantom_001"}, opt, 0, 3);
  CHECK(report.rows.size() == 45);  // 15 subsets x 3 regions
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& row : report.rows) {
    CHECK(row.mean_dice >= 0.0);
    CHECK(row.mean_dice <= 1.0);
    CHECK(row.n_subjects == 1);
    seen.insert({row.region, row.subset});
  }
  CHECK(seen.size() == 45);

  const DiceReport again = evaluate_subsets(*toy.model, "unet", test_set, subsets,
                                            {"phantom_000", "phantom_001"}, opt, 0, 3);
  REQUIRE(again.rows.size() == report.rows.size());
  for (size_t i = 0; i < report.rows.size(); ++i)
    CHECK(report.rows[i].mean_dice == again.rows[i].mean_dice);
}

TEST_CASE("evaluate_subsets refuses training-fold leakage") {
  auto& toy = trained_toy();
  std::vector<const Subject*> test_set = {&toy.subjects[0]};  // a training subject
  EvalOptions opt;
  opt.input_side = 28;
  CHECK_THROWS_WITH_AS(
      evaluate_subsets(*toy.model, "unet", test_set, {ModalityMask::full(4)},
                       {"phantom_000", "phantom_001"}, opt, 0, 3),
      doctest::Contains("leak"), Error);
}

TEST_CASE("report emission: csv round-trips exactly, markdown has the grid") {
  testutil::TempDir dir("report");
  // synthetic reports for 7 model variants over the full sweep
  std::vector<DiceReport> reports;
  Rng rng(5);
  const auto subsets = enumerate_subsets(4);
  for (const std::string model :
       {"UNet", "Dropout", "Multipath", "SharedRep", "Multipath+Pretraining",
        "SharedRep+Pretraining", "Dedicated"}) {
    DiceReport r;
    r.fold_id = 0;
    r.seed = 11;
    for (const Region region : kAllRegions)
      for (const auto& subset : subsets)
        r.rows.push_back({model, region_name(region), subset.name(kDefaultModalities),
                          rng.uniform(), 5});
    reports.push_back(std::move(r));
  }

  const auto csv_path = dir.path() / "report.csv";
  emit_report(reports, csv_path, ReportFormat::Csv);
  const auto parsed = parse_report_csv(csv_path);
  REQUIRE(parsed.size() == 1);  // same fold/seed collapse into one group
  CHECK(parsed[0].rows.size() == 7u * 45u);
  for (size_t i = 0; i < reports.size(); ++i)
    for (size_t j = 0; j < reports[i].rows.size(); ++j) {
      const auto& original = reports[i].rows[j];
      const auto& back = parsed[0].rows[i * 45 + j];
      CHECK(original.mean_dice == back.mean_dice);  // exact double round-trip
      CHECK(original.model == back.model);
      CHECK(original.subset == back.subset);
    }

  const auto md_path = dir.path() / "report.md";
  emit_report(reports, md_path, ReportFormat::Markdown);
  const std::string md = read_text_file(md_path);
  CHECK(md.find("## whole_tumor") != std::string::npos);
  CHECK(md.find("## tumor_core") != std::string::npos);
  CHECK(md.find("## enhancing_core") != std::string::npos);
  // 3 tables x (7 model rows) plus headers; count model rows
  size_t unet_rows = 0;
  for (size_t pos = md.find("| UNet |"); pos != std::string::npos;
       pos = md.find("| UNet |", pos + 1))
    ++unet_rows;
  CHECK(unet_rows == 3);
  // each table row has 15 value columns
  const size_t first_row = md.find("| UNet |");
  const size_t row_end = md.find('\n', first_row);
  const std::string row = md.substr(first_row, row_end - first_row);
  CHECK(std::count(row.begin(), row.end(), '|') == 17);  // model + 15 values + closing

  CHECK_THROWS_AS(emit_report({}, dir.path() / "empty.csv", ReportFormat::Csv), Error);
}

TEST_CASE("merge_reports concatenates dedicated per-subset reports") {
  DiceReport a, b;
  a.fold_id = b.fold_id = 0;
  a.seed = b.seed = 1;
  a.rows.push_back({"Dedicated", "whole_tumor", "T1W", 0.5, 2});
  b.rows.push_back({"Dedicated", "whole_tumor", "T2W", 0.6, 2});
  const DiceReport merged = merge_reports({a, b});
  CHECK(merged.rows.size() == 2);
  CHECK_THROWS_AS(merge_reports({}), Error);
}
