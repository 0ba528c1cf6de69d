#include "modseg/optim.hpp"

#include <cmath>

#include "modseg/error.hpp"

namespace modseg {

void Adam::step(const std::vector<Param*>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = Tensor(params[i]->value.shape());
      v_[i] = Tensor(params[i]->value.shape());
    }
  }
  require(m_.size() == params.size(), "optimizer state does not match parameter list");
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (!p.trainable || p.buffer) continue;
    require(p.grad.same_shape(p.value), "parameter ", p.name, " has no gradient");
    float* value = p.value.data();
    const float* grad = p.grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (int64_t j = 0, n = p.value.numel(); j < n; ++j) {
      const double g = grad[j];
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double mhat = mj / bias1;
      const double vhat = vj / bias2;
      value[j] = static_cast<float>(value[j] -
                                    cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon));
    }
  }
}

}  // namespace modseg
