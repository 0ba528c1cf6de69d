#include <doctest.h>

#include <cmath>
#include <set>

#include "modseg/dataset.hpp"
#include "modseg/error.hpp"
#include "modseg/phantom.hpp"
#include "modseg/sampling.hpp"
#include "modseg/volume.hpp"
#include "test_util.hpp"

using namespace modseg;

TEST_CASE("phantom generation is deterministic and seed sensitive") {
  const auto a = generate_phantoms(1, 4, 32, 4);
  const auto b = generate_phantoms(1, 4, 32, 4);
  REQUIRE(a.size() == 4);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id() == b[i].id());
    CHECK(testutil::bitwise_equal(a[i].volume.voxels, b[i].volume.voxels));
    CHECK(a[i].labels.labels == b[i].labels.labels);
  }
  const auto c = generate_phantoms(2, 4, 32, 4);
  CHECK_FALSE(testutil::bitwise_equal(a[0].volume.voxels, c[0].volume.voxels));
}

TEST_CASE("phantom regions are nested and non-empty") {
  for (const auto& subject : generate_phantoms(3, 6, 40, 4)) {
    const auto regions = derive_regions(subject.labels);
    CHECK(regions[0].count() > regions[1].count());
    CHECK(regions[1].count() > regions[2].count());
    CHECK(regions[2].count() > 0);
    for (size_t v = 0; v < regions[0].mask.size(); ++v) {
      if (regions[2].mask[v]) CHECK(regions[1].mask[v]);
      if (regions[1].mask[v]) CHECK(regions[0].mask[v]);
    }
  }
}

TEST_CASE("phantom rejects sides that cannot hold the nested regions") {
  CHECK_THROWS_AS(generate_phantoms(1, 1, 16, 4), Error);
}

TEST_CASE("phantom modalities carry the documented partial contrasts") {
  const auto subjects = generate_phantoms(9, 3, 64, 4);
  for (const auto& subject : subjects) {
    const auto brain = subject.volume.brain_mask();
    double flair_wt = 0, flair_healthy = 0, t1wc_enh = 0, t1wc_core = 0;
    int64_t n_wt = 0, n_healthy = 0, n_enh = 0, n_core = 0;
    const float* t1wc = subject.volume.channel(1);
    const float* flair = subject.volume.channel(3);
    for (int64_t v = 0; v < subject.volume.spatial_numel(); ++v) {
      const uint8_t label = subject.labels.labels[static_cast<size_t>(v)];
      if (!brain[static_cast<size_t>(v)]) {
        // background voxels are exactly zero in every modality
        for (int m = 0; m < 4; ++m) CHECK(subject.volume.channel(m)[v] == 0.0f);
        continue;
      }
      if (label == 0) {
        flair_healthy += flair[v];
        ++n_healthy;
      } else {
        flair_wt += flair[v];
        ++n_wt;
      }
      if (label == 4) {
        t1wc_enh += t1wc[v];
        ++n_enh;
      }
      if (label == 1) {
        t1wc_core += t1wc[v];
        ++n_core;
      }
    }
    // FLAIR separates whole tumor from healthy brain
    CHECK(flair_wt / n_wt > flair_healthy / n_healthy + 0.2);
    // T1WC separates enhancing core from necrotic core
    CHECK(t1wc_enh / n_enh > t1wc_core / n_core + 0.4);
  }
}

TEST_CASE("normalize maps a two-point modality onto -1/+1") {
  Subject s;
  s.volume.subject_id = "two_point";
  s.volume.modality_names = {"A"};
  s.volume.voxels = Tensor({1, 2, 2, 2});
  // half background, half {2, 4}
  s.volume.voxels[0] = 2.0f;
  s.volume.voxels[1] = 4.0f;
  s.volume.voxels[2] = 2.0f;
  s.volume.voxels[3] = 4.0f;
  const auto out = normalize(s.volume);
  CHECK(out.voxels[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(out.voxels[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out.voxels[4] == 0.0f);  // background untouched
}

TEST_CASE("normalize hits zero mean unit variance and is idempotent") {
  auto subjects = generate_phantoms(4, 2, 32, 4);
  for (auto& subject : subjects) {
    const auto normalized = normalize(subject.volume);
    const auto brain = normalized.brain_mask();
    for (int m = 0; m < 4; ++m) {
      double sum = 0, ss = 0;
      int64_t n = 0;
      const float* ch = normalized.channel(m);
      for (int64_t v = 0; v < normalized.spatial_numel(); ++v) {
        if (!brain[static_cast<size_t>(v)]) continue;
        sum += ch[v];
        ss += static_cast<double>(ch[v]) * ch[v];
        ++n;
      }
      const double mean = sum / n;
      const double stddev = std::sqrt(ss / n - mean * mean);
      CHECK(std::abs(mean) < 1e-3);
      CHECK(std::abs(stddev - 1.0) < 1e-3);
    }
    const auto twice = normalize(normalized);
    CHECK(testutil::max_abs_diff(twice.voxels, normalized.voxels) < 1e-6);
  }
}

TEST_CASE("normalize rejects degenerate modalities") {
  Subject s;
  s.volume.subject_id = "flat";
  s.volume.modality_names = {"A"};
  s.volume.voxels = Tensor({1, 2, 2, 2});
  CHECK_THROWS_AS(normalize(s.volume), Error);  // all background

  s.volume.voxels.fill(3.0f);
  CHECK_THROWS_AS(normalize(s.volume), Error);  // constant brain
}

TEST_CASE("derive_regions follows the label convention") {
  LabelVolume labels;
  labels.dz = labels.dy = labels.dx = 2;
  labels.labels.assign(8, 0);

  SUBCASE("all background gives three empty masks") {
    for (const auto& region : derive_regions(labels)) CHECK(region.count() == 0);
  }
  SUBCASE("a single enhancing voxel appears in all three masks") {
    labels.labels[3] = 4;
    const auto regions = derive_regions(labels);
    for (const auto& region : regions) {
      CHECK(region.count() == 1);
      CHECK(region.mask[3] == 1);
    }
  }
  SUBCASE("edema counts only toward the whole tumor") {
    labels.labels[5] = 2;
    const auto regions = derive_regions(labels);
    CHECK(regions[0].count() == 1);
    CHECK(regions[1].count() == 0);
    CHECK(regions[2].count() == 0);
  }
  SUBCASE("necrotic core is whole tumor and tumor core") {
    labels.labels[6] = 1;
    const auto regions = derive_regions(labels);
    CHECK(regions[0].count() == 1);
    CHECK(regions[1].count() == 1);
    CHECK(regions[2].count() == 0);
  }
}

TEST_CASE("patch sampling hits the tumor-centered ratio and aligns targets") {
  const auto subjects = generate_phantoms(7, 1, 48, 4);
  const Subject& subject = subjects[0];
  PatchSampler sampler(subject, 28, 2);  // target side 12
  CHECK(sampler.target_side() == 12);

  Rng rng(99);
  int in_tumor = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const PatchSample sample = sampler.sample(rng);
    in_tumor += sample.center_in_tumor ? 1 : 0;
    if (i < 50) {
      // target cube equals the label volume content at the sampled origin
      const auto expected =
          extract_target_patch(subject.labels, sample.z0, sample.y0, sample.x0, 12);
      CHECK(sample.target == expected);
      // the center voxel matches the declared tumor membership
      const int64_t off = (12 - 1) / 2;
      const uint8_t center = sample.target[static_cast<size_t>((off * 12 + off) * 12 + off)];
      CHECK((center != 0) == sample.center_in_tumor);
      // input patch carries the volume content where it overlaps
      const int64_t margin = (28 - 12) / 2;
      for (int64_t probe = 0; probe < 8; ++probe) {
        const int64_t z = sample.z0 - margin + probe, y = sample.y0 - margin,
                      x = sample.x0 - margin;
        const float got =
            sample.input[((0 * 28 + probe) * 28 + 0) * 28 + 0];
        float want = 0.0f;
        if (z >= 0 && y >= 0 && x >= 0 && z < 48 && y < 48 && x < 48)
          want = subject.volume.channel(0)[(z * 48 + y) * 48 + x];
        CHECK(got == want);
      }
    }
  }
  const double ratio = static_cast<double>(in_tumor) / draws;
  CHECK(ratio > 0.47);
  CHECK(ratio < 0.53);
}

TEST_CASE("patch sampling is deterministic under a fixed seed") {
  const auto subjects = generate_phantoms(8, 1, 32, 4);
  PatchSampler sampler(subjects[0], 20, 2);
  Rng r1(5), r2(5);
  for (int i = 0; i < 10; ++i) {
    const auto a = sampler.sample(r1);
    const auto b = sampler.sample(r2);
    CHECK(a.z0 == b.z0);
    CHECK(a.y0 == b.y0);
    CHECK(a.x0 == b.x0);
    CHECK(testutil::bitwise_equal(a.input, b.input));
  }
}

TEST_CASE("reference patch geometry holds through the sampler") {
  const auto subjects = generate_phantoms(12, 1, 32, 4);
  PatchSampler sampler(subjects[0], 108, 4);
  CHECK(sampler.target_side() == 20);
  Rng rng(1);
  const auto sample = sampler.sample(rng);
  CHECK(sample.input.shape() == std::vector<int64_t>{4, 108, 108, 108});
  CHECK(sample.target.size() == 20u * 20u * 20u);
}

TEST_CASE("make_folds partitions subjects into near-equal folds") {
  std::vector<std::string> ids;
  for (int i = 0; i < 278; ++i) ids.push_back("s" + std::to_string(i));
  const FoldSplit split = make_folds(ids, 5, 17);
  REQUIRE(split.folds.size() == 5);
  std::multiset<size_t> sizes;
  std::set<std::string> seen;
  for (const auto& fold : split.folds) {
    sizes.insert(fold.size());
    for (const auto& id : fold) CHECK(seen.insert(id).second);  // disjoint
  }
  CHECK(seen.size() == 278);  // union covers everything
  CHECK(sizes == std::multiset<size_t>{55, 55, 56, 56, 56});

  const FoldSplit again = make_folds(ids, 5, 17);
  CHECK(split.folds == again.folds);
  const FoldSplit other = make_folds(ids, 5, 18);
  CHECK(split.folds != other.folds);
}

TEST_CASE("make_folds handles small sets and rejects k > n") {
  std::vector<std::string> ids = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  const FoldSplit split = make_folds(ids, 5, 1);
  for (const auto& fold : split.folds) CHECK(fold.size() == 2);
  CHECK_THROWS_AS(make_folds({"a", "b"}, 3, 1), Error);
}

TEST_CASE("internal dataset layout round-trips subjects") {
  testutil::TempDir dir("dataset");
  const auto subjects = generate_phantoms(6, 2, 32, 3);
  for (const auto& s : subjects) save_subject(dir.path() / s.id(), s);
  const auto loaded = load_dataset(dir.path());
  REQUIRE(loaded.size() == 2);
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id() == subjects[i].id());
    CHECK(loaded[i].volume.modality_names == subjects[i].volume.modality_names);
    CHECK(testutil::bitwise_equal(loaded[i].volume.voxels, subjects[i].volume.voxels));
    CHECK(loaded[i].labels.labels == subjects[i].labels.labels);
  }
  CHECK(dataset_checksum(dir.path()) == dataset_checksum(dir.path()));
}

TEST_CASE("select_channels restricts modalities") {
  const auto subjects = generate_phantoms(2, 1, 32, 4);
  const auto reduced = subjects[0].volume.select_channels({1, 3});
  CHECK(reduced.num_modalities() == 2);
  CHECK(reduced.modality_names == std::vector<std::string>{"T1WC", "FLAIR"});
  for (int64_t v = 0; v < reduced.spatial_numel(); ++v) {
    CHECK(reduced.channel(0)[v] == subjects[0].volume.channel(1)[v]);
    CHECK(reduced.channel(1)[v] == subjects[0].volume.channel(3)[v]);
  }
}
