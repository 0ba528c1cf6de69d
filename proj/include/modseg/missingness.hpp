#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modseg/rng.hpp"
#include "modseg/tensor.hpp"

namespace modseg {

// Availability of the input modalities. The rescaling convention keeps the
// expected channel magnitude constant: kept channels are multiplied by
// m_total / m_present, dropped channels are zeroed.
struct ModalityMask {
  std::vector<uint8_t> present;

  static ModalityMask full(int m) { return ModalityMask{std::vector<uint8_t>(m, 1)}; }

  int m_total() const { return static_cast<int>(present.size()); }
  int m_present() const {
    int n = 0;
    for (uint8_t p : present) n += p ? 1 : 0;
    return n;
  }
  bool is_present(int i) const { return present[static_cast<size_t>(i)] != 0; }
  bool all_present() const { return m_present() == m_total(); }
  bool empty() const { return m_present() == 0; }
  double scale_factor() const;

  // "+"-joined names of present modalities, e.g. "T1WC+FLAIR"
  std::string name(const std::vector<std::string>& modality_names) const;

  bool operator==(const ModalityMask& o) const = default;
};

struct DropoutSchedule {
  double p_initial = 0.125;
  int doubling_period = 50;
  double p_max = 0.5;
};

// p = min(p_initial * 2^floor(epoch / doubling_period), p_max)
double schedule_p(int epoch, const DropoutSchedule& schedule);

// Drops each modality independently with probability p; resamples whenever
// the draw would leave no modality, so the returned mask is never empty.
ModalityMask sample_mask(Rng& rng, double p, int m);

// Zeroes dropped channels and scales kept ones, in place. `x` has the
// modality axis leading: [M, ...].
void apply_mask(Tensor& x, const ModalityMask& mask);
// Same for a batched tensor [N, M, ...].
void apply_mask_batch(Tensor& x, const ModalityMask& mask);

// All 2^m - 1 non-empty masks: decreasing subset size, and within one size
// the order of the evaluation table (reverse-lexicographic on the sorted
// member indices).
std::vector<ModalityMask> enumerate_subsets(int m);

// Parses a "+"-joined subset name against the given modality names.
ModalityMask parse_subset(const std::string& name,
                          const std::vector<std::string>& modality_names);

}  // namespace modseg
