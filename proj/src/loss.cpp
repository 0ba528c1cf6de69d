#include "modseg/loss.hpp"

#include <cmath>

#include "modseg/error.hpp"

namespace modseg {

LossResult softmax_cross_entropy(const Tensor& logits,
                                 const std::vector<uint8_t>& target_classes) {
  require(logits.rank() == 5, "loss expects [N,L,t,t,t] logits, got ", logits.shape_str());
  const int64_t N = logits.size(0), L = logits.size(1);
  const int64_t V = logits.size(2) * logits.size(3) * logits.size(4);
  require(static_cast<int64_t>(target_classes.size()) == N * V, "loss: ",
          target_classes.size(), " targets for ", N * V, " voxels");

  LossResult result;
  result.grad_logits = Tensor(logits.shape());
  const double inv_count = 1.0 / static_cast<double>(N * V);
  double total = 0.0;
  std::vector<double> p(static_cast<size_t>(L));

  for (int64_t n = 0; n < N; ++n) {
    const float* in = logits.data() + n * L * V;
    float* grad = result.grad_logits.data() + n * L * V;
    for (int64_t v = 0; v < V; ++v) {
      double max_logit = in[v];
      for (int64_t c = 1; c < L; ++c) max_logit = std::max<double>(max_logit, in[c * V + v]);
      double denom = 0.0;
      for (int64_t c = 0; c < L; ++c) {
        p[static_cast<size_t>(c)] = std::exp(in[c * V + v] - max_logit);
        denom += p[static_cast<size_t>(c)];
      }
      const int target = target_classes[static_cast<size_t>(n * V + v)];
      require(target >= 0 && target < L, "loss: target class ", target, " out of range");
      total += -(std::log(p[static_cast<size_t>(target)]) - std::log(denom));
      for (int64_t c = 0; c < L; ++c) {
        const double prob = p[static_cast<size_t>(c)] / denom;
        grad[c * V + v] =
            static_cast<float>((prob - (c == target ? 1.0 : 0.0)) * inv_count);
      }
    }
  }
  result.loss = total * inv_count;
  return result;
}

}  // namespace modseg
