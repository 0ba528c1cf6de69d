#pragma once

#include <vector>

#include "modseg/layers.hpp"

namespace modseg {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // Applies one update to every trainable non-buffer parameter; moment
  // state is keyed by position in `params`, which must stay stable.
  void step(const std::vector<Param*>& params);

  const AdamConfig& config() const { return cfg_; }
  int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace modseg
