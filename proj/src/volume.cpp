#include "modseg/volume.hpp"

#include <cmath>

#include "modseg/error.hpp"

namespace modseg {

std::vector<uint8_t> MultiModalVolume::brain_mask() const {
  const int64_t n = spatial_numel();
  std::vector<uint8_t> mask(static_cast<size_t>(n), 0);
  for (int m = 0; m < num_modalities(); ++m) {
    const float* ch = channel(m);
    for (int64_t v = 0; v < n; ++v)
      if (ch[v] != background_value) mask[static_cast<size_t>(v)] = 1;
  }
  return mask;
}

MultiModalVolume MultiModalVolume::select_channels(const std::vector<int>& indices) const {
  require(!indices.empty(), "select_channels: no channels requested");
  MultiModalVolume out;
  out.subject_id = subject_id;
  out.background_value = background_value;
  out.voxels = Tensor({static_cast<int64_t>(indices.size()), dim_z(), dim_y(), dim_x()});
  out.modality_names.clear();
  const int64_t n = spatial_numel();
  for (size_t i = 0; i < indices.size(); ++i) {
    const int m = indices[i];
    require(m >= 0 && m < num_modalities(), "select_channels: bad modality index ", m);
    out.modality_names.push_back(modality_names[static_cast<size_t>(m)]);
    std::copy(channel(m), channel(m) + n, out.voxels.data() + static_cast<int64_t>(i) * n);
  }
  return out;
}

std::array<RegionMask, 3> derive_regions(const LabelVolume& labels) {
  std::array<RegionMask, 3> out;
  for (size_t r = 0; r < 3; ++r) {
    out[r].region = kAllRegions[r];
    out[r].dz = labels.dz;
    out[r].dy = labels.dy;
    out[r].dx = labels.dx;
    out[r].mask.assign(labels.labels.size(), 0);
  }
  for (size_t v = 0; v < labels.labels.size(); ++v) {
    const int label = labels.labels[v];
    if (label == 0) continue;
    out[0].mask[v] = 1;                              // whole tumor: 1, 2, 4
    if (label == 1 || label == 4) out[1].mask[v] = 1;  // tumor core
    if (label == 4) out[2].mask[v] = 1;                // enhancing core
  }
  return out;
}

MultiModalVolume normalize(MultiModalVolume volume) {
  const auto brain = volume.brain_mask();
  const int64_t n = volume.spatial_numel();
  for (int m = 0; m < volume.num_modalities(); ++m) {
    float* ch = volume.channel(m);
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t v = 0; v < n; ++v) {
      if (!brain[static_cast<size_t>(v)]) continue;
      sum += ch[v];
      ++count;
    }
    require(count >= 2, "normalize: modality ", volume.modality_names[static_cast<size_t>(m)],
            " of subject ", volume.subject_id, " has fewer than 2 non-background voxels");
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (int64_t v = 0; v < n; ++v) {
      if (!brain[static_cast<size_t>(v)]) continue;
      const double d = ch[v] - mean;
      ss += d * d;
    }
    const double stddev = std::sqrt(ss / static_cast<double>(count));
    require(stddev > 0.0, "normalize: modality ",
            volume.modality_names[static_cast<size_t>(m)], " of subject ", volume.subject_id,
            " is constant over the brain region");
    const float inv = static_cast<float>(1.0 / stddev);
    const float mu = static_cast<float>(mean);
    for (int64_t v = 0; v < n; ++v) {
      if (brain[static_cast<size_t>(v)])
        ch[v] = (ch[v] - mu) * inv;
      else
        ch[v] = volume.background_value;
    }
  }
  return volume;
}

void check_subject_consistency(const Subject& s) {
  require(s.volume.voxels.rank() == 4, "subject ", s.id(), ": voxels must be [M,D,H,W]");
  require(s.labels.dz == s.volume.dim_z() && s.labels.dy == s.volume.dim_y() &&
              s.labels.dx == s.volume.dim_x(),
          "subject ", s.id(), ": label shape does not match volume shape");
  for (uint8_t l : s.labels.labels)
    require(l == 0 || l == 1 || l == 2 || l == 4, "subject ", s.id(), ": invalid label ",
            static_cast<int>(l));
}

}  // namespace modseg
