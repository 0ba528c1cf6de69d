#pragma once

#include <cstdint>
#include <vector>

#include "modseg/missingness.hpp"
#include "modseg/tensor.hpp"

namespace modseg {

// Elementwise fusion kernels over per-pathway feature blocks of `len`
// scalars. Absent pathways are passed as null pointers. Templated on the
// scalar type; the networks instantiate float, the gradient tests double.
namespace fusionk {

// Concatenation with modality-dropout scaling: present blocks are copied
// scaled by m_total / m_present, absent blocks are zero-filled.
template <typename S>
void concat_forward(const std::vector<const S*>& paths, int64_t len, S* out) {
  int present = 0;
  for (const S* p : paths) present += p ? 1 : 0;
  const S scale = static_cast<S>(paths.size()) / static_cast<S>(present);
  for (size_t i = 0; i < paths.size(); ++i) {
    S* block = out + static_cast<int64_t>(i) * len;
    if (const S* p = paths[i]) {
      for (int64_t v = 0; v < len; ++v) block[v] = scale * p[v];
    } else {
      for (int64_t v = 0; v < len; ++v) block[v] = S(0);
    }
  }
}

template <typename S>
void concat_backward(const S* gout, size_t num_paths, int64_t len,
                     const std::vector<S*>& gpaths) {
  int present = 0;
  for (S* p : gpaths) present += p ? 1 : 0;
  const S scale = static_cast<S>(num_paths) / static_cast<S>(present);
  for (size_t i = 0; i < num_paths; ++i) {
    S* gp = gpaths[i];
    if (!gp) continue;
    const S* block = gout + static_cast<int64_t>(i) * len;
    for (int64_t v = 0; v < len; ++v) gp[v] += scale * block[v];
  }
}

// Mean and population variance over the present pathways; out holds the
// mean block followed by the variance block. A single present pathway
// yields an exactly-zero variance block.
template <typename S>
void meanvar_forward(const std::vector<const S*>& paths, int64_t len, S* out) {
  int present = 0;
  for (const S* p : paths) present += p ? 1 : 0;
  S* mean = out;
  S* var = out + len;
  if (present == 1) {
    const S* only = nullptr;
    for (const S* p : paths)
      if (p) only = p;
    for (int64_t v = 0; v < len; ++v) {
      mean[v] = only[v];
      var[v] = S(0);
    }
    return;
  }
  const S inv_n = S(1) / static_cast<S>(present);
  for (int64_t v = 0; v < len; ++v) {
    S sum = S(0);
    for (const S* p : paths)
      if (p) sum += p[v];
    mean[v] = sum * inv_n;
  }
  for (int64_t v = 0; v < len; ++v) {
    S ss = S(0);
    for (const S* p : paths)
      if (p) {
        const S d = p[v] - mean[v];
        ss += d * d;
      }
    var[v] = ss * inv_n;
  }
}

// d mean / d f_i = 1/n, d var / d f_i = 2 (f_i - mean) / n over present
// pathways; gradients accumulate into gpaths.
template <typename S>
void meanvar_backward(const std::vector<const S*>& paths, const S* gout, int64_t len,
                      const std::vector<S*>& gpaths) {
  int present = 0;
  for (const S* p : paths) present += p ? 1 : 0;
  const S inv_n = S(1) / static_cast<S>(present);
  const S* gmean = gout;
  const S* gvar = gout + len;
  for (int64_t v = 0; v < len; ++v) {
    S mean = S(0);
    for (const S* p : paths)
      if (p) mean += p[v];
    mean *= inv_n;
    for (size_t i = 0; i < paths.size(); ++i) {
      if (!paths[i]) continue;
      gpaths[i][v] += inv_n * (gmean[v] + S(2) * (paths[i][v] - mean) * gvar[v]);
    }
  }
}

}  // namespace fusionk

// Tensor-level fusion of per-pathway feature maps [F, ...]; entries for
// absent modalities are ignored (only the mask decides presence).
Tensor fuse_concat(const std::vector<Tensor>& features, const ModalityMask& mask);
Tensor fuse_meanvar(const std::vector<Tensor>& features, const ModalityMask& mask);

// Batched fusion layers used inside the multipath networks. Forward inputs
// are [N, F, t, t, t] per present pathway (null for absent).
class FuseConcatLayer {
 public:
  Tensor forward(const std::vector<const Tensor*>& paths, bool cache);
  std::vector<Tensor> backward(const Tensor& gout) const;

 private:
  std::vector<bool> present_;
  std::vector<int64_t> path_shape_;
};

class FuseMeanVarLayer {
 public:
  Tensor forward(const std::vector<const Tensor*>& paths, bool cache);
  std::vector<Tensor> backward(const Tensor& gout) const;

 private:
  std::vector<Tensor> cached_paths_;
  std::vector<bool> present_;
  std::vector<int64_t> path_shape_;
};

}  // namespace modseg
