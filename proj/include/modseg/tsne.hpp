#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace modseg {

struct TsneParams {
  double perplexity = 30.0;
  int iterations = 1000;
  uint64_t seed = 0;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;
};

// Exact (O(N^2)) t-SNE embedding to 2D. Deterministic given the seed.
// Practical up to a few thousand points; inputs above 10k are rejected.
std::vector<std::array<double, 2>> compute_tsne(const std::vector<std::vector<float>>& features,
                                                const TsneParams& params);

}  // namespace modseg
