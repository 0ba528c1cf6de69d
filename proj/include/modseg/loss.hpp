#pragma once

#include <cstdint>
#include <vector>

#include "modseg/tensor.hpp"

namespace modseg {

struct LossResult {
  double loss = 0.0;   // mean over batch and voxels
  Tensor grad_logits;  // same shape as logits
};

// Voxelwise softmax cross-entropy. logits: [N, L, t, t, t];
// target_classes: N * t^3 class indices in [0, L).
LossResult softmax_cross_entropy(const Tensor& logits,
                                 const std::vector<uint8_t>& target_classes);

}  // namespace modseg
