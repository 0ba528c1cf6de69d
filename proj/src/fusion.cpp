#include "modseg/fusion.hpp"

#include "modseg/error.hpp"

namespace modseg {

namespace {

void check_fusion_inputs(const std::vector<Tensor>& features, const ModalityMask& mask) {
  require(!mask.empty(), "fusion: empty modality mask");
  require(static_cast<int>(features.size()) == mask.m_total(), "fusion: ", features.size(),
          " feature blocks for mask of arity ", mask.m_total());
  const Tensor* ref = nullptr;
  for (int i = 0; i < mask.m_total(); ++i) {
    if (!mask.is_present(i)) continue;
    const Tensor& f = features[static_cast<size_t>(i)];
    require(!f.empty(), "fusion: missing features for present modality ", i);
    if (!ref)
      ref = &f;
    else
      require(f.same_shape(*ref), "fusion: feature shape mismatch ", f.shape_str(), " vs ",
              ref->shape_str());
  }
}

}  // namespace

Tensor fuse_concat(const std::vector<Tensor>& features, const ModalityMask& mask) {
  check_fusion_inputs(features, mask);
  const int m = mask.m_total();
  std::vector<const float*> paths(static_cast<size_t>(m), nullptr);
  const Tensor* ref = nullptr;
  for (int i = 0; i < m; ++i)
    if (mask.is_present(i)) {
      paths[static_cast<size_t>(i)] = features[static_cast<size_t>(i)].data();
      ref = &features[static_cast<size_t>(i)];
    }
  const int64_t len = ref->numel();
  std::vector<int64_t> shape = ref->shape();
  shape[0] *= m;
  Tensor out(shape);
  fusionk::concat_forward(paths, len, out.data());
  return out;
}

Tensor fuse_meanvar(const std::vector<Tensor>& features, const ModalityMask& mask) {
  check_fusion_inputs(features, mask);
  const int m = mask.m_total();
  std::vector<const float*> paths(static_cast<size_t>(m), nullptr);
  const Tensor* ref = nullptr;
  for (int i = 0; i < m; ++i)
    if (mask.is_present(i)) {
      paths[static_cast<size_t>(i)] = features[static_cast<size_t>(i)].data();
      ref = &features[static_cast<size_t>(i)];
    }
  const int64_t len = ref->numel();
  std::vector<int64_t> shape = ref->shape();
  shape[0] *= 2;
  Tensor out(shape);
  fusionk::meanvar_forward(paths, len, out.data());
  return out;
}

Tensor FuseConcatLayer::forward(const std::vector<const Tensor*>& paths, bool cache) {
  const Tensor* ref = nullptr;
  for (const Tensor* p : paths)
    if (p) ref = p;
  require(ref, "concat fusion: no present pathway");
  const int64_t N = ref->size(0), F = ref->size(1);
  const int64_t V = ref->numel() / (N * F);
  const auto m = static_cast<int64_t>(paths.size());
  Tensor out({N, m * F, ref->size(2), ref->size(3), ref->size(4)});
  std::vector<const float*> ptrs(paths.size());
  for (int64_t n = 0; n < N; ++n) {
    for (size_t i = 0; i < paths.size(); ++i)
      ptrs[i] = paths[i] ? paths[i]->data() + n * F * V : nullptr;
    fusionk::concat_forward(ptrs, F * V, out.data() + n * m * F * V);
  }
  if (cache) {
    present_.assign(paths.size(), false);
    for (size_t i = 0; i < paths.size(); ++i) present_[i] = paths[i] != nullptr;
    path_shape_ = ref->shape();
  }
  return out;
}

std::vector<Tensor> FuseConcatLayer::backward(const Tensor& gout) const {
  require(!present_.empty(), "concat fusion backward without cached forward");
  const int64_t N = path_shape_[0], F = path_shape_[1];
  const int64_t V = gout.numel() / (gout.size(0) * gout.size(1));
  std::vector<Tensor> grads(present_.size());
  std::vector<float*> gptrs(present_.size(), nullptr);
  for (size_t i = 0; i < present_.size(); ++i)
    if (present_[i]) grads[i] = Tensor(path_shape_);
  for (int64_t n = 0; n < N; ++n) {
    for (size_t i = 0; i < present_.size(); ++i)
      gptrs[i] = present_[i] ? grads[i].data() + n * F * V : nullptr;
    fusionk::concat_backward(gout.data() + n * gout.size(1) * V, present_.size(), F * V,
                             gptrs);
  }
  return grads;
}

Tensor FuseMeanVarLayer::forward(const std::vector<const Tensor*>& paths, bool cache) {
  const Tensor* ref = nullptr;
  for (const Tensor* p : paths)
    if (p) ref = p;
  require(ref, "mean/variance fusion: no present pathway");
  const int64_t N = ref->size(0), F = ref->size(1);
  const int64_t V = ref->numel() / (N * F);
  Tensor out({N, 2 * F, ref->size(2), ref->size(3), ref->size(4)});
  std::vector<const float*> ptrs(paths.size());
  for (int64_t n = 0; n < N; ++n) {
    for (size_t i = 0; i < paths.size(); ++i)
      ptrs[i] = paths[i] ? paths[i]->data() + n * F * V : nullptr;
    fusionk::meanvar_forward(ptrs, F * V, out.data() + n * 2 * F * V);
  }
  if (cache) {
    present_.assign(paths.size(), false);
    cached_paths_.assign(paths.size(), Tensor());
    for (size_t i = 0; i < paths.size(); ++i) {
      present_[i] = paths[i] != nullptr;
      if (paths[i]) cached_paths_[i] = *paths[i];
    }
    path_shape_ = ref->shape();
  }
  return out;
}

std::vector<Tensor> FuseMeanVarLayer::backward(const Tensor& gout) const {
  require(!present_.empty(), "mean/variance fusion backward without cached forward");
  const int64_t N = path_shape_[0], F = path_shape_[1];
  const int64_t V = gout.numel() / (gout.size(0) * gout.size(1));
  std::vector<Tensor> grads(present_.size());
  std::vector<const float*> ptrs(present_.size(), nullptr);
  std::vector<float*> gptrs(present_.size(), nullptr);
  for (size_t i = 0; i < present_.size(); ++i)
    if (present_[i]) grads[i] = Tensor(path_shape_);
  for (int64_t n = 0; n < N; ++n) {
    for (size_t i = 0; i < present_.size(); ++i) {
      ptrs[i] = present_[i] ? cached_paths_[i].data() + n * F * V : nullptr;
      gptrs[i] = present_[i] ? grads[i].data() + n * F * V : nullptr;
    }
    fusionk::meanvar_backward(ptrs, gout.data() + n * 2 * F * V, F * V, gptrs);
  }
  return grads;
}

}  // namespace modseg
