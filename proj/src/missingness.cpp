#include "modseg/missingness.hpp"

#include <algorithm>
#include <cmath>

#include "modseg/error.hpp"

namespace modseg {

double ModalityMask::scale_factor() const {
  const int kept = m_present();
  require(kept > 0, "empty modality mask has no scale factor");
  return static_cast<double>(m_total()) / static_cast<double>(kept);
}

std::string ModalityMask::name(const std::vector<std::string>& modality_names) const {
  require(modality_names.size() == present.size(), "mask arity ", present.size(),
          " does not match ", modality_names.size(), " modality names");
  std::string out;
  for (size_t i = 0; i < present.size(); ++i) {
    if (!present[i]) continue;
    if (!out.empty()) out += '+';
    out += modality_names[i];
  }
  return out;
}

double schedule_p(int epoch, const DropoutSchedule& schedule) {
  require(epoch >= 0, "schedule_p: epoch must be >= 0, got ", epoch);
  require(schedule.doubling_period > 0, "schedule_p: doubling period must be positive");
  const double p = schedule.p_initial * std::pow(2.0, epoch / schedule.doubling_period);
  return std::min(p, schedule.p_max);
}

ModalityMask sample_mask(Rng& rng, double p, int m) {
  require(p >= 0.0 && p < 1.0, "sample_mask: p must be in [0, 1), got ", p);
  require(m >= 1, "sample_mask: need at least one modality");
  ModalityMask mask;
  mask.present.resize(static_cast<size_t>(m));
  while (true) {
    int kept = 0;
    for (int i = 0; i < m; ++i) {
      const bool keep = !rng.bernoulli(p);
      mask.present[static_cast<size_t>(i)] = keep ? 1 : 0;
      kept += keep ? 1 : 0;
    }
    if (kept > 0) return mask;
  }
}

namespace {

void apply_mask_channels(float* data, const ModalityMask& mask, int64_t channel_size) {
  const float scale = static_cast<float>(mask.scale_factor());
  for (int i = 0; i < mask.m_total(); ++i) {
    float* ch = data + i * channel_size;
    if (mask.is_present(i)) {
      if (scale != 1.0f)
        for (int64_t v = 0; v < channel_size; ++v) ch[v] *= scale;
    } else {
      std::fill(ch, ch + channel_size, 0.0f);
    }
  }
}

}  // namespace

void apply_mask(Tensor& x, const ModalityMask& mask) {
  require(!mask.empty(), "apply_mask: empty mask");
  require(x.rank() >= 1 && x.size(0) == mask.m_total(), "apply_mask: tensor ", x.shape_str(),
          " does not have leading modality axis of ", mask.m_total());
  apply_mask_channels(x.data(), mask, x.numel() / x.size(0));
}

void apply_mask_batch(Tensor& x, const ModalityMask& mask) {
  require(!mask.empty(), "apply_mask: empty mask");
  require(x.rank() >= 2 && x.size(1) == mask.m_total(), "apply_mask_batch: tensor ",
          x.shape_str(), " does not have modality axis of ", mask.m_total());
  const int64_t sample_size = x.numel() / x.size(0);
  for (int64_t n = 0; n < x.size(0); ++n)
    apply_mask_channels(x.data() + n * sample_size, mask, sample_size / x.size(1));
}

std::vector<ModalityMask> enumerate_subsets(int m) {
  require(m >= 1, "enumerate_subsets: need m >= 1");
  require(m <= 16, "enumerate_subsets: m too large (", m, ")");
  std::vector<std::vector<int>> subsets;
  for (uint32_t bits = 1; bits < (1u << m); ++bits) {
    std::vector<int> members;
    for (int i = 0; i < m; ++i)
      if (bits & (1u << i)) members.push_back(i);
    subsets.push_back(std::move(members));
  }
  std::sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a > b;  // reverse-lexicographic within one size
  });
  std::vector<ModalityMask> masks;
  masks.reserve(subsets.size());
  for (const auto& members : subsets) {
    ModalityMask mask;
    mask.present.assign(static_cast<size_t>(m), 0);
    for (int i : members) mask.present[static_cast<size_t>(i)] = 1;
    masks.push_back(std::move(mask));
  }
  return masks;
}

ModalityMask parse_subset(const std::string& name,
                          const std::vector<std::string>& modality_names) {
  ModalityMask mask;
  mask.present.assign(modality_names.size(), 0);
  size_t start = 0;
  while (start <= name.size()) {
    size_t end = name.find('+', start);
    if (end == std::string::npos) end = name.size();
    const std::string token = name.substr(start, end - start);
    require(!token.empty(), "bad subset name '", name, "': empty component");
    auto it = std::find(modality_names.begin(), modality_names.end(), token);
    require(it != modality_names.end(), "unknown modality '", token, "' in subset '", name, "'");
    mask.present[static_cast<size_t>(it - modality_names.begin())] = 1;
    start = end + 1;
    if (end == name.size()) break;
  }
  require(!mask.empty(), "subset '", name, "' selects no modality");
  return mask;
}

}  // namespace modseg
