#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modseg/rng.hpp"
#include "modseg/volume.hpp"

namespace modseg {

struct PatchSample {
  Tensor input;                 // [M, s, s, s]
  std::vector<uint8_t> target;  // raw labels, [t*t*t]
  bool center_in_tumor = false;
  int64_t z0 = 0, y0 = 0, x0 = 0;  // target cube origin in volume coordinates
  int64_t input_side = 0, target_side = 0;
};

// Draws training patches from one subject: with probability 0.5 the center
// voxel of the target cube lies in the tumor, otherwise it is a non-tumor
// brain voxel. Patches near the border are padded with background_value.
class PatchSampler {
 public:
  PatchSampler(const Subject& subject, int64_t input_side, int depth);

  PatchSample sample(Rng& rng) const;

  int64_t target_side() const { return target_side_; }
  int64_t input_side() const { return input_side_; }
  const Subject& subject() const { return *subject_; }
  int64_t tumor_voxel_count() const { return static_cast<int64_t>(tumor_.size()); }

 private:
  const Subject* subject_;
  int64_t input_side_, target_side_, margin_;
  std::vector<int64_t> tumor_;       // linear voxel indices with tumor label
  std::vector<int64_t> brain_free_;  // brain voxels with label 0
};

// Extracts the [M, s, s, s] input cube whose target cube origin is
// (z0, y0, x0); out-of-volume voxels read background_value.
Tensor extract_input_patch(const MultiModalVolume& volume, int64_t z0, int64_t y0, int64_t x0,
                           int64_t input_side, int64_t target_side);
std::vector<uint8_t> extract_target_patch(const LabelVolume& labels, int64_t z0, int64_t y0,
                                          int64_t x0, int64_t target_side);

struct FoldSplit {
  std::vector<std::vector<std::string>> folds;
  uint64_t seed = 0;
};

// Shuffles the ids with the seed and deals them into k folds whose sizes
// differ by at most one.
FoldSplit make_folds(std::vector<std::string> subject_ids, int k, uint64_t seed);

}  // namespace modseg
