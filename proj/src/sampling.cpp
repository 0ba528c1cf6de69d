#include "modseg/sampling.hpp"

#include <algorithm>

#include "modseg/error.hpp"
#include "modseg/geometry.hpp"

namespace modseg {

PatchSampler::PatchSampler(const Subject& subject, int64_t input_side, int depth)
    : subject_(&subject), input_side_(input_side) {
  target_side_ = output_size(input_side, depth);
  margin_ = (input_side_ - target_side_) / 2;
  const auto brain = subject.volume.brain_mask();
  const int64_t n = subject.volume.spatial_numel();
  for (int64_t v = 0; v < n; ++v) {
    const uint8_t label = subject.labels.labels[static_cast<size_t>(v)];
    if (label != 0)
      tumor_.push_back(v);
    else if (brain[static_cast<size_t>(v)])
      brain_free_.push_back(v);
  }
  require(!tumor_.empty(), "subject ", subject.id(), " has no tumor voxels to sample");
  require(!brain_free_.empty(), "subject ", subject.id(),
          " has no tumor-free brain voxels to sample");
}

PatchSample PatchSampler::sample(Rng& rng) const {
  const bool in_tumor = rng.bernoulli(0.5);
  const auto& pool = in_tumor ? tumor_ : brain_free_;
  const int64_t center = pool[rng.uniform_int(pool.size())];

  const int64_t dy = subject_->volume.dim_y(), dx = subject_->volume.dim_x();
  const int64_t cz = center / (dy * dx);
  const int64_t cy = (center / dx) % dy;
  const int64_t cx = center % dx;
  // center voxel sits at offset (t-1)/2 inside the target cube
  const int64_t off = (target_side_ - 1) / 2;
  const int64_t z0 = cz - off, y0 = cy - off, x0 = cx - off;

  PatchSample s;
  s.center_in_tumor = in_tumor;
  s.z0 = z0;
  s.y0 = y0;
  s.x0 = x0;
  s.input_side = input_side_;
  s.target_side = target_side_;
  s.input = extract_input_patch(subject_->volume, z0, y0, x0, input_side_, target_side_);
  s.target = extract_target_patch(subject_->labels, z0, y0, x0, target_side_);
  return s;
}

Tensor extract_input_patch(const MultiModalVolume& volume, int64_t z0, int64_t y0, int64_t x0,
                           int64_t input_side, int64_t target_side) {
  const int64_t margin = (input_side - target_side) / 2;
  const int64_t iz = z0 - margin, iy = y0 - margin, ix = x0 - margin;
  const int m = volume.num_modalities();
  Tensor patch({m, input_side, input_side, input_side});
  if (volume.background_value != 0.0f) patch.fill(volume.background_value);
  const int64_t dz = volume.dim_z(), dy = volume.dim_y(), dx = volume.dim_x();

  const int64_t z_lo = std::max<int64_t>(0, iz), z_hi = std::min(dz, iz + input_side);
  const int64_t y_lo = std::max<int64_t>(0, iy), y_hi = std::min(dy, iy + input_side);
  const int64_t x_lo = std::max<int64_t>(0, ix), x_hi = std::min(dx, ix + input_side);
  if (z_lo >= z_hi || y_lo >= y_hi || x_lo >= x_hi) return patch;  // fully outside

  for (int mod = 0; mod < m; ++mod) {
    const float* src = volume.channel(mod);
    float* dst = patch.data() + mod * input_side * input_side * input_side;
    for (int64_t z = z_lo; z < z_hi; ++z)
      for (int64_t y = y_lo; y < y_hi; ++y) {
        const float* row = src + (z * dy + y) * dx + x_lo;
        float* out = dst + ((z - iz) * input_side + (y - iy)) * input_side + (x_lo - ix);
        std::copy(row, row + (x_hi - x_lo), out);
      }
  }
  return patch;
}

std::vector<uint8_t> extract_target_patch(const LabelVolume& labels, int64_t z0, int64_t y0,
                                          int64_t x0, int64_t target_side) {
  std::vector<uint8_t> target(static_cast<size_t>(target_side * target_side * target_side), 0);
  const int64_t z_lo = std::max<int64_t>(0, z0), z_hi = std::min(labels.dz, z0 + target_side);
  const int64_t y_lo = std::max<int64_t>(0, y0), y_hi = std::min(labels.dy, y0 + target_side);
  const int64_t x_lo = std::max<int64_t>(0, x0), x_hi = std::min(labels.dx, x0 + target_side);
  for (int64_t z = z_lo; z < z_hi; ++z)
    for (int64_t y = y_lo; y < y_hi; ++y)
      for (int64_t x = x_lo; x < x_hi; ++x)
        target[static_cast<size_t>(((z - z0) * target_side + (y - y0)) * target_side +
                                   (x - x0))] = labels.at(z, y, x);
  return target;
}

FoldSplit make_folds(std::vector<std::string> subject_ids, int k, uint64_t seed) {
  require(k >= 2, "make_folds: need k >= 2, got ", k);
  require(static_cast<int>(subject_ids.size()) >= k, "make_folds: ", subject_ids.size(),
          " subjects cannot fill ", k, " folds");
  std::sort(subject_ids.begin(), subject_ids.end());
  Rng rng(seed);
  // Fisher-Yates
  for (size_t i = subject_ids.size(); i > 1; --i) {
    const size_t j = rng.uniform_int(i);
    std::swap(subject_ids[i - 1], subject_ids[j]);
  }
  FoldSplit split;
  split.seed = seed;
  split.folds.resize(static_cast<size_t>(k));
  const size_t n = subject_ids.size();
  const size_t base = n / static_cast<size_t>(k);
  const size_t extra = n % static_cast<size_t>(k);
  size_t pos = 0;
  for (size_t f = 0; f < static_cast<size_t>(k); ++f) {
    const size_t take = base + (f < extra ? 1 : 0);
    for (size_t i = 0; i < take; ++i) split.folds[f].push_back(subject_ids[pos++]);
  }
  return split;
}

}  // namespace modseg
