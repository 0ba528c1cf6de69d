#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "modseg/tensor.hpp"

namespace modseg {

inline const std::vector<std::string> kDefaultModalities = {"T1W", "T1WC", "T2W", "FLAIR"};

// Voxel label conventions: 0 background, 1 necrotic/non-enhancing core,
// 2 edema, 4 enhancing core.
constexpr std::array<int, 4> kLabelSet = {0, 1, 2, 4};

inline int class_of_label(int label) {
  switch (label) {
    case 0: return 0;
    case 1: return 1;
    case 2: return 2;
    case 4: return 3;
    default: return -1;
  }
}

inline int label_of_class(int cls) {
  constexpr std::array<int, 4> table = {0, 1, 2, 4};
  return table[static_cast<size_t>(cls)];
}

// Co-registered stack of M modality volumes for one subject.
// voxels: [M, D, H, W]; non-brain voxels carry background_value in every
// modality (skull-stripped convention).
struct MultiModalVolume {
  std::string subject_id;
  Tensor voxels;
  std::vector<std::string> modality_names = kDefaultModalities;
  float background_value = 0.0f;

  int num_modalities() const { return static_cast<int>(voxels.size(0)); }
  int64_t dim_z() const { return voxels.size(1); }
  int64_t dim_y() const { return voxels.size(2); }
  int64_t dim_x() const { return voxels.size(3); }
  int64_t spatial_numel() const { return dim_z() * dim_y() * dim_x(); }

  const float* channel(int m) const { return voxels.data() + m * spatial_numel(); }
  float* channel(int m) { return voxels.data() + m * spatial_numel(); }

  // 1 where any modality differs from background_value.
  std::vector<uint8_t> brain_mask() const;

  // Copy restricted to the given modality indices (used by dedicated models).
  MultiModalVolume select_channels(const std::vector<int>& indices) const;
};

struct LabelVolume {
  std::vector<uint8_t> labels;  // raw labels in {0,1,2,4}, [D*H*W]
  int64_t dz = 0, dy = 0, dx = 0;

  int64_t numel() const { return dz * dy * dx; }
  uint8_t at(int64_t z, int64_t y, int64_t x) const {
    return labels[static_cast<size_t>((z * dy + y) * dx + x)];
  }
};

enum class Region { WholeTumor, TumorCore, EnhancingCore };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::WholeTumor: return "whole_tumor";
    case Region::TumorCore: return "tumor_core";
    case Region::EnhancingCore: return "enhancing_core";
  }
  return "?";
}

constexpr std::array<Region, 3> kAllRegions = {Region::WholeTumor, Region::TumorCore,
                                               Region::EnhancingCore};

struct RegionMask {
  Region region;
  std::vector<uint8_t> mask;  // [D*H*W]
  int64_t dz = 0, dy = 0, dx = 0;

  int64_t count() const {
    int64_t n = 0;
    for (uint8_t v : mask) n += v ? 1 : 0;
    return n;
  }
};

// WT = {1,2,4}, TC = {1,4}, ET = {4}.
std::array<RegionMask, 3> derive_regions(const LabelVolume& labels);

inline bool label_in_region(int label, Region r) {
  switch (r) {
    case Region::WholeTumor: return label == 1 || label == 2 || label == 4;
    case Region::TumorCore: return label == 1 || label == 4;
    case Region::EnhancingCore: return label == 4;
  }
  return false;
}

// Per modality, shifts/scales the non-background voxels to zero mean and
// unit standard deviation; background voxels keep background_value.
MultiModalVolume normalize(MultiModalVolume volume);

struct Subject {
  MultiModalVolume volume;
  LabelVolume labels;

  const std::string& id() const { return volume.subject_id; }
};

void check_subject_consistency(const Subject& s);

}  // namespace modseg
