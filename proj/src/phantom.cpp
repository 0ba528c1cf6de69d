#include "modseg/phantom.hpp"

#include <array>
#include <cmath>

#include "modseg/error.hpp"
#include "modseg/rng.hpp"

namespace modseg {

namespace {

struct Ellipsoid {
  double cz, cy, cx;
  double rz, ry, rx;

  bool contains(int64_t z, int64_t y, int64_t x) const {
    const double a = (z - cz) / rz;
    const double b = (y - cy) / ry;
    const double c = (x - cx) / rx;
    return a * a + b * b + c * c <= 1.0;
  }
};

// Mean intensity per modality pattern and tissue: {brain, edema, core,
// enhancing}. Tumor contrast is moderate and mixed-sign across modalities
// (dark in the T1-like pair, bright in the T2-like pair), so combining
// modalities pays off; the internal boundaries are only clean in specific
// modalities (enhancing vs core needs T1WC, edema vs rest is weak alone).
constexpr std::array<std::array<double, 4>, 4> kContrast = {{
    {1.0, 0.82, 0.74, 0.74},  // T1W-like: whole tumor dark
    {1.0, 0.86, 0.74, 1.28},  // T1WC-like: tumor dark, enhancing bright
    {1.0, 1.22, 1.12, 1.12},  // T2W-like: whole tumor bright
    {1.0, 1.26, 1.26, 1.26},  // FLAIR-like: whole tumor uniformly bright
}};

constexpr double kNoiseSigma = 0.08;

double jitter(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

}  // namespace

std::vector<Subject> generate_phantoms(uint64_t seed, int n_subjects, int side, int m) {
  require(side >= 32, "phantom side ", side, " too small to contain nested tumor regions");
  require(m >= 1, "need at least one modality");
  require(n_subjects >= 0, "negative subject count");

  std::vector<std::string> names;
  for (int i = 0; i < m; ++i) {
    if (i < 4)
      names.push_back(kDefaultModalities[static_cast<size_t>(i)]);
    else
      names.push_back("MOD" + std::to_string(i));
  }

  Rng master(seed);
  std::vector<Subject> subjects;
  subjects.reserve(static_cast<size_t>(n_subjects));

  for (int s = 0; s < n_subjects; ++s) {
    Rng rng = master.split();
    const double half = side / 2.0;

    Ellipsoid brain{half, half, half, jitter(rng, 0.80, 0.90) * half,
                    jitter(rng, 0.80, 0.90) * half, jitter(rng, 0.80, 0.90) * half};

    // Tumor center placed so the edema ellipsoid stays inside the brain.
    const double edema_r = jitter(rng, 0.30, 0.42) * half;
    const double max_off = std::max(0.0, 0.75 * half - edema_r);
    Ellipsoid edema{half + jitter(rng, -max_off, max_off),
                    half + jitter(rng, -max_off, max_off),
                    half + jitter(rng, -max_off, max_off),
                    edema_r * jitter(rng, 0.85, 1.15), edema_r * jitter(rng, 0.85, 1.15),
                    edema_r * jitter(rng, 0.85, 1.15)};
    Ellipsoid core{edema.cz, edema.cy, edema.cx, 0.68 * edema.rz, 0.68 * edema.ry,
                   0.68 * edema.rx};
    Ellipsoid enhancing{edema.cz, edema.cy, edema.cx, 0.60 * core.rz, 0.60 * core.ry,
                        0.60 * core.rx};

    Subject subj;
    subj.volume.subject_id =
        "phantom_" + std::string(s < 10 ? "00" : (s < 100 ? "0" : "")) + std::to_string(s);
    subj.volume.modality_names = names;
    subj.volume.background_value = 0.0f;
    subj.volume.voxels = Tensor({m, side, side, side});
    subj.labels.dz = subj.labels.dy = subj.labels.dx = side;
    subj.labels.labels.assign(static_cast<size_t>(side) * side * side, 0);

    const int64_t n = subj.volume.spatial_numel();
    std::vector<uint8_t> tissue(static_cast<size_t>(n), 0);  // 0 bg, 1 brain, 2/3/4 tumor shells
    int64_t v = 0;
    for (int64_t z = 0; z < side; ++z)
      for (int64_t y = 0; y < side; ++y)
        for (int64_t x = 0; x < side; ++x, ++v) {
          if (!brain.contains(z, y, x)) continue;
          uint8_t t = 1;
          uint8_t label = 0;
          if (enhancing.contains(z, y, x)) {
            t = 4;
            label = 4;
          } else if (core.contains(z, y, x)) {
            t = 3;
            label = 1;
          } else if (edema.contains(z, y, x)) {
            t = 2;
            label = 2;
          }
          tissue[static_cast<size_t>(v)] = t;
          subj.labels.labels[static_cast<size_t>(v)] = label;
        }

    int64_t n_edema = 0, n_core = 0, n_enh = 0;
    for (uint8_t t : tissue) {
      n_edema += t == 2;
      n_core += t == 3;
      n_enh += t == 4;
    }
    require(n_edema > 0 && n_core > 0 && n_enh > 0, "phantom ", subj.volume.subject_id,
            ": side ", side, " too small, a nested tumor region came out empty");

    for (int mod = 0; mod < m; ++mod) {
      const auto& contrast = kContrast[static_cast<size_t>(mod % 4)];
      const double gain = 1.0 + 0.05 * (mod / 4);  // distinguish repeated patterns
      float* ch = subj.volume.channel(mod);
      for (int64_t i = 0; i < n; ++i) {
        const uint8_t t = tissue[static_cast<size_t>(i)];
        if (t == 0) {
          ch[i] = 0.0f;
          continue;
        }
        const double mean = gain * contrast[static_cast<size_t>(t - 1)];
        ch[i] = static_cast<float>(mean + kNoiseSigma * rng.normal());
      }
    }
    subjects.push_back(std::move(subj));
  }
  return subjects;
}

}  // namespace modseg
